import numpy as np
import pytest

from coxflow.records import TerminalRecord


def records(Z, T):
    """Terminal records from a covariate matrix and event times."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] == 1 and len(np.atleast_1d(T)) > 1:
        Z = Z.T
    return [TerminalRecord(str(i), float(t), Z[i]) for i, t in enumerate(np.atleast_1d(T))]


def riemann(f, lo, hi, n=10_000):
    """Midpoint Riemann sum used as the brute-force quadrature oracle."""
    u = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    return float(np.sum(f(u)) * (hi - lo) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
