import numpy as np
import pytest

from qlab.grid import PeriodicGrid, ScalarField
from qlab.tensor import MetricField


def conformal_phi(grid: PeriodicGrid) -> np.ndarray:
    """The standard test factor 0.1 sin x1 + 0.05 cos(x2 + x3)."""
    x = grid.coords()
    return 0.1 * np.sin(x[0]) + 0.05 * np.cos(x[1] + x[2])


def conformal_metric(grid: PeriodicGrid) -> MetricField:
    return MetricField.conformal(ScalarField(grid, conformal_phi(grid)))


def general_metric(grid: PeriodicGrid) -> MetricField:
    """A non-conformal, non-diagonal smooth metric."""
    x = grid.coords()
    n = grid.dim
    h = np.zeros((n, n) + grid.shape)
    h[0, 1] = h[1, 0] = 0.05 * np.sin(x[0] + x[1])
    h[1, 1] = 0.08 * np.cos(x[2])
    h[n - 1, n - 1] = 0.06 * np.sin(x[0])
    return MetricField.flat(grid).perturbed(h)


def rel_l2(a, b):
    return float(np.sqrt(np.sum((a - b) ** 2) / np.sum(b**2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, printed once at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion:2d}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
