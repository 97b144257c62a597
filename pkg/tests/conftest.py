import numpy as np
import pytest

from bbmlab.drift import CBAR_CRITICAL
from bbmlab.oscillator import SpectralBasis, default_y_grid
from bbmlab.pipeline import rate_report, selfsimilar_run


@pytest.fixture(scope="session")
def y_grid():
    return default_y_grid()


@pytest.fixture(scope="session")
def weights(y_grid):
    dy = y_grid[1] - y_grid[0]
    w = np.full_like(y_grid, dy)
    w[0] = w[-1] = dy / 2.0
    return w


@pytest.fixture(scope="session")
def basis12(y_grid):
    return SpectralBasis(y_grid, 12)


def _run(cbar):
    import time
    t0 = time.perf_counter()
    traj, series = selfsimilar_run(cbar)
    report = rate_report(cbar, traj, series)
    report["wall_seconds"] = time.perf_counter() - t0
    return traj, series, report


@pytest.fixture(scope="session")
def run_critical():
    return _run(CBAR_CRITICAL)


@pytest.fixture(scope="session")
def run_cbar0():
    return _run(0.0)


@pytest.fixture(scope="session")
def run_cbar10():
    return _run(10.0)
