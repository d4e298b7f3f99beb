"""Exception hierarchy.

Input problems (bad files, bad parameters) and numerical failures are kept
apart so the CLI can map them to distinct exit codes.
"""


class UnifierError(Exception):
    """Base class for all package errors."""


class DataError(UnifierError):
    """Malformed or inconsistent input data."""


class ParameterError(UnifierError, ValueError):
    """A hyperparameter or argument outside its valid range."""


class ConfigError(UnifierError):
    """A run configuration file failed validation."""


class MaskError(UnifierError):
    """No feasible missing-sample assignment was found."""


class NumericalError(UnifierError):
    """A linear system or objective evaluation broke down."""


class MonotonicityError(NumericalError):
    """The objective increased beyond the allowed slack."""

    def __init__(self, message, *, iteration=None, step=None, before=None, after=None):
        super().__init__(message)
        self.iteration = iteration
        self.step = step
        self.before = before
        self.after = after
