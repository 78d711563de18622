import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from critchemo.core import make_grid, symmetric_params, validate_params
from critchemo.stationary import solve_steady

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

REF_R_MAX = 60.0
REF_N = 2048


@pytest.fixture(scope="session")
def sym():
    return symmetric_params(3)


@pytest.fixture(scope="session")
def asym():
    return validate_params(3, 1.25, 15 / 13)


@pytest.fixture(scope="session")
def ref_grid():
    return make_grid(REF_R_MAX, REF_N)


@pytest.fixture(scope="session")
def steady(sym, ref_grid):
    return solve_steady(sym, ref_grid, normalization=1.0)


@pytest.fixture(scope="session")
def steady_small(sym):
    return solve_steady(sym, make_grid(REF_R_MAX, 512), normalization=1.0)


def ball(grid, radius=1.0):
    """Cell-averaged indicator of the ball, exact on cells cut by the sphere."""
    e = grid.r_edges
    inner = np.minimum(e[1:], radius) ** grid.d - np.minimum(e[:-1], radius) ** grid.d
    return np.clip(inner / (e[1:] ** grid.d - e[:-1] ** grid.d), 0.0, 1.0)
