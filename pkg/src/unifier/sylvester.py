"""Generalized Sylvester equations ``A X B + P X Q (+ ridge X) = F``.

All four coefficient matrices are symmetric positive semidefinite, so the
operator ``X -> A X B + P X Q + ridge X`` is symmetric PSD under the Frobenius
inner product and conjugate gradients can be run directly on matrix iterates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError, ParameterError

DENSE_MAX_UNKNOWNS = 4096
RIDGE_RESTARTS = 3


@dataclass(frozen=True)
class SylvesterSystem:
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    F: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        m, d = np.shape(self.F)
        for name, M, size in (("A", self.A, m), ("P", self.P, m), ("B", self.B, d), ("Q", self.Q, d)):
            if np.shape(M) != (size, size):
                raise ParameterError(f"{name} has shape {np.shape(M)}, expected ({size}, {size})")
            M = np.asarray(M)
            if M.size and np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
                raise ParameterError(f"{name} is not symmetric")
        if self.ridge < 0:
            raise ParameterError(f"ridge must be nonnegative, got {self.ridge}")

    @property
    def shape(self):
        return np.shape(self.F)

    def apply(self, X: np.ndarray, ridge: Optional[float] = None) -> np.ndarray:
        r = self.ridge if ridge is None else ridge
        return self.A @ X @ self.B + self.P @ X @ self.Q + r * X

    def relative_residual(self, X: np.ndarray, ridge: Optional[float] = None) -> float:
        R = self.apply(X, ridge) - self.F
        return float(np.linalg.norm(R) / max(np.linalg.norm(self.F), 1.0))


@dataclass(frozen=True)
class SolveReport:
    X: np.ndarray
    iterations: int
    residual: float
    converged: bool
    ridge: float = 0.0


def default_ridge(F: np.ndarray) -> float:
    m, d = np.shape(F)
    if m * d == 0:
        return 0.0
    return 1e-8 * float(np.linalg.norm(F)) / (m * d)


def _cg(system: SylvesterSystem, ridge: float, X0: np.ndarray, tol: float, max_iter: int):
    """Matrix-form CG. Returns ``(X, iterations, negative_curvature)``."""
    F = system.F
    fscale = max(float(np.linalg.norm(F)), 1.0)
    X = X0.copy()
    R = F - system.apply(X, ridge)
    rr = float(np.vdot(R, R))
    if np.sqrt(rr) <= tol * fscale:
        return X, 0, False
    Pd = R.copy()
    it = 0
    while it < max_iter:
        MP = system.apply(Pd, ridge)
        curv = float(np.vdot(Pd, MP))
        if curv <= 0.0 or not np.isfinite(curv):
            return X, it, True
        step = rr / curv
        X += step * Pd
        R -= step * MP
        rr_new = float(np.vdot(R, R))
        it += 1
        if np.sqrt(rr_new) <= tol * fscale:
            break
        Pd = R + (rr_new / rr) * Pd
        rr = rr_new
    return X, it, False


def solve_cg(
    system: SylvesterSystem,
    tol: float = 1e-8,
    max_iter: int = 500,
    x0: Optional[np.ndarray] = None,
) -> SolveReport:
    """Conjugate gradients on ``X -> A X B + P X Q + ridge X``.

    Stops once ``||M(X) - F||_F / max(||F||_F, 1) <= tol``. Starting from
    ``x0`` (zero by default), every iterate lowers the quadratic energy of the
    system, so a truncated solve never ends worse than its starting point.

    If negative curvature shows up the ridge is multiplied by 10 and the solve
    restarted, at most three times.
    """
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    m, d = system.shape
    if m * d == 0:
        return SolveReport(np.zeros((m, d)), 0, 0.0, True, system.ridge)
    start = np.zeros((m, d)) if x0 is None else np.array(x0, dtype=float)
    if start.shape != (m, d):
        raise ParameterError(f"x0 has shape {start.shape}, expected {(m, d)}")
    ridge = system.ridge
    total = 0
    for attempt in range(RIDGE_RESTARTS + 1):
        X, its, negative = _cg(system, ridge, start, tol, max_iter)
        total += its
        # the recursive residual can drift from the true one; refresh a few times
        refreshes = 0
        while not negative and its > 0 and total < max_iter and refreshes < 3:
            if system.relative_residual(X, ridge) <= tol:
                break
            X, its, negative = _cg(system, ridge, X, tol, max_iter - total)
            total += its
            refreshes += 1
        if not negative:
            res = system.relative_residual(X, ridge)
            return SolveReport(X, total, res, res <= tol, ridge)
        if attempt == RIDGE_RESTARTS:
            break
        ridge = 10.0 * ridge if ridge > 0 else max(default_ridge(system.F), 1e-12)
    raise NumericalError(
        f"Sylvester operator is numerically indefinite: negative curvature persisted "
        f"after {RIDGE_RESTARTS} ridge increases (final ridge {ridge:.3e})"
    )


def kron_matrix(system: SylvesterSystem, ridge: Optional[float] = None) -> np.ndarray:
    """Dense matrix of the operator acting on column-major ``vec(X)``."""
    r = system.ridge if ridge is None else ridge
    m, d = system.shape
    return np.kron(system.B.T, system.A) + np.kron(system.Q.T, system.P) + r * np.eye(m * d)


def solve_dense(system: SylvesterSystem) -> SolveReport:
    """Direct solve of the vectorised system; for small problems and testing."""
    m, d = system.shape
    if m * d > DENSE_MAX_UNKNOWNS:
        raise ParameterError(f"dense solve limited to {DENSE_MAX_UNKNOWNS} unknowns, got {m * d}")
    if m * d == 0:
        return SolveReport(np.zeros((m, d)), 0, 0.0, True, system.ridge)
    M = kron_matrix(system)
    f = system.F.reshape(-1, order="F")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(M, check_finite=True)
        if np.any(np.abs(np.diag(lu[0])) <= np.finfo(float).eps * max(np.abs(M).max(), 1.0) * m * d):
            raise np.linalg.LinAlgError
        x = scipy.linalg.lu_solve(lu, f)
    except (np.linalg.LinAlgError, ValueError):
        hint = " (try a positive ridge)" if system.ridge == 0 else ""
        raise NumericalError(f"Sylvester system is singular{hint}") from None
    X = x.reshape((m, d), order="F")
    res = system.relative_residual(X)
    return SolveReport(X, 1, res, True, system.ridge)
