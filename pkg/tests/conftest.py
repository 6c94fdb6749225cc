import numpy as np
import pytest

from agetumor.grid import Grid, density_bound, density_weights, make_state
from agetumor.params import default_parameters


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_grid():
    return Grid.make(d=1, N_theta=16, Theta_max=0.8, N_x=24, L=3.0)


@pytest.fixture
def grid2d():
    return Grid.make(d=2, N_theta=8, Theta_max=0.8, N_x=12, L=2.0)


@pytest.fixture
def params_case1():
    return default_parameters("case1")


def make_admissible_state(grid, params, m, rng, fraction=0.5, empty_top=4):
    """Random nonnegative state with compact support in age and space,
    scaled to a fraction of the admissible density bound."""
    n = rng.uniform(0.0, 1.0, size=grid.shape)
    n[-empty_top:] = 0.0
    for a in range(grid.d):
        idx = [slice(None)] * (grid.d + 1)
        idx[a + 1] = slice(0, 2)
        n[tuple(idx)] = 0.0
        idx[a + 1] = slice(-2, None)
        n[tuple(idx)] = 0.0
    rho = np.tensordot(density_weights(grid, params), n, axes=(0, 0))
    peak = float(rho.max())
    if peak > 0:
        n *= fraction * density_bound(m, params.p_M) / peak
    return make_state(grid, params, n, m)


@pytest.fixture
def admissible_state(small_grid, params_case1, rng):
    return make_admissible_state(small_grid, params_case1, 5.0, rng)
