import numpy as np
import pytest

from unifier.data import MultiViewDataset

# filled by tests/test_acceptance.py, reported at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=20, dims=(5, 4), missing=((), ())):
    views = [rng.standard_normal((n, d)) for d in dims]
    masks = []
    for rows in missing:
        m = np.ones(n, dtype=bool)
        m[list(rows)] = False
        masks.append(m)
    return MultiViewDataset(tuple(views), tuple(masks), labels=np.arange(n) % 3)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng, n=20, dims=(5, 4), missing=((1, 4, 7), (2, 9)))
