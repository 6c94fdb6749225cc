import numpy as np
import pytest

from agetumor.errors import NumericsError
from agetumor.grid import Grid, make_state, support_radii
from agetumor.oracles import (ClassicalState, HomogeneousState, classical_step,
                              homogeneous_step, write_series_csv)
from agetumor.params import default_parameters


def _bump(x, R):
    out = np.zeros_like(x)
    inside = np.abs(x / R) < 1
    out[inside] = np.exp(1 - 1 / (1 - (x[inside] / R) ** 2))
    return out


# ----------------------------------------------------------------- classical

def test_classical_zero_stays_zero():
    grid = Grid.make(1, 2, 0.2, 32, 2.0)
    state = ClassicalState(t=0.0, rho=np.zeros(32), m=5.0)
    out = classical_step(state, lambda p: 0.3 - p, grid, 1e-4)
    assert np.all(out.rho == 0.0)
    assert out.t == 1e-4


def test_classical_mass_conserved_without_growth():
    grid = Grid.make(1, 2, 0.2, 64, 2.0)
    rho = 0.8 * _bump(grid.x_centers, 1.0)
    state = ClassicalState(t=0.0, rho=rho, m=5.0)
    dt = grid.dx ** 2 / (2 * 4 * 1.0) * 0.9
    mass0 = rho.sum() * grid.dx
    for _ in range(200):
        state = classical_step(state, lambda p: np.zeros_like(p), grid, dt,
                               p_M=1.0)
    mass = state.rho.sum() * grid.dx
    assert abs(mass - mass0) <= 1e-12 * mass0
    assert state.rho.min() >= 0.0


def test_classical_support_grows():
    grid = Grid.make(1, 2, 0.2, 64, 2.0)
    rho = 0.9 * _bump(grid.x_centers, 0.8)
    state = ClassicalState(t=0.0, rho=rho, m=5.0)
    dt = grid.dx ** 2 / (2 * 4 * 1.0) * 0.9

    def radius(r):
        mask = r > 1e-12
        return np.abs(grid.x_centers[mask]).max()

    r_before = radius(state.rho)
    for _ in range(400):
        state = classical_step(state, lambda p: np.zeros_like(p), grid, dt)
    assert radius(state.rho) > r_before


def test_classical_cfl_fault():
    grid = Grid.make(1, 2, 0.2, 32, 2.0)
    rho = 0.8 * _bump(grid.x_centers, 1.0)
    state = ClassicalState(t=0.0, rho=rho, m=5.0)
    with pytest.raises(NumericsError):
        classical_step(state, lambda p: np.zeros_like(p), grid, 10.0)
    with pytest.raises(NumericsError):
        classical_step(state, lambda p: np.zeros_like(p), grid,
                       grid.dx ** 2, p_M=1.0)


# --------------------------------------------------------------- homogeneous

def test_homogeneous_pure_shift():
    dtheta = 0.01
    n = np.zeros(200)
    n[10:20] = 1.0
    state = HomogeneousState(t=0.0, n=n)
    zero = lambda th: np.zeros_like(th)
    for _ in range(30):
        state = homogeneous_step(state, zero, zero, dtheta, dtheta)
    assert np.allclose(state.n[40:50], 1.0, atol=1e-14)
    assert abs(state.n.sum() - n.sum()) < 1e-12


def test_homogeneous_zeroth_moment_identity():
    # Delta N per step matches dt * sum((beta - mu) n) dtheta to O(dt^2):
    # the deviation shrinks ~4x when dt is halved
    beta = lambda th: 0.8 + 0.2 * np.sin(th)
    mu = lambda th: np.full_like(th, 0.1)
    devs = []
    for dtheta in (0.005, 0.0025):
        cells = int(round(1.5 / dtheta))
        theta = (np.arange(cells) + 0.5) * dtheta
        n = np.zeros(cells)
        n[:cells // 3] = np.exp(-theta[:cells // 3] / 0.2)
        state = HomogeneousState(t=0.0, n=n)
        dt = dtheta
        worst = 0.0
        for _ in range(20):
            N_before = state.n.sum() * dtheta
            expected = dt * np.sum((beta(theta) - mu(theta)) * state.n) * dtheta
            state = homogeneous_step(state, beta, mu, dt, dtheta)
            N_after = state.n.sum() * dtheta
            worst = max(worst, abs((N_after - N_before) - expected))
        devs.append(worst)
    assert devs[0] < 1e-4
    assert devs[0] / devs[1] > 3.0


def test_homogeneous_growth_rate():
    # constant rates: N(t) tracks N0*exp((b0-mu0)t)
    dtheta = dt = 2e-3
    N_cells = 700
    theta = (np.arange(N_cells) + 0.5) * dtheta
    n = np.zeros(N_cells)
    n[:50] = 1.0
    beta = lambda th: np.full_like(th, 1.0)
    mu = lambda th: np.full_like(th, 0.2)
    state = HomogeneousState(t=0.0, n=n)
    N0 = n.sum() * dtheta
    steps = 250
    for _ in range(steps):
        state = homogeneous_step(state, beta, mu, dt, dtheta)
    N = state.n.sum() * dtheta
    exact = N0 * np.exp(0.8 * dt * steps)
    assert abs(N - exact) / exact < 0.01


def test_homogeneous_causality():
    # renewal only once the profile reaches the division window
    dtheta = dt = 0.01
    n = np.zeros(120)
    n[0] = 1.0
    beta = lambda th: np.where(th > 0.5, 1.0, 0.0)
    mu = lambda th: np.zeros_like(th)
    state = HomogeneousState(t=0.0, n=n)
    for k in range(45):
        state = homogeneous_step(state, beta, mu, dt, dtheta)
        assert state.n[0] == 0.0  # no newborns yet
    for k in range(20):
        state = homogeneous_step(state, beta, mu, dt, dtheta)
    assert state.n[0] > 0.0


def test_homogeneous_cfl_fault():
    state = HomogeneousState(t=0.0, n=np.ones(10))
    zero = lambda th: np.zeros_like(th)
    with pytest.raises(NumericsError):
        homogeneous_step(state, zero, zero, 0.02, 0.01)


def test_series_csv_tag(tmp_path):
    path = tmp_path / "oracle.csv"
    write_series_csv(path, "classical", ("t", "mass"), [(0.0, 1.0), (0.1, 1.5)])
    lines = path.read_text().splitlines()
    assert lines[0] == "solver,t,mass"
    assert lines[1].startswith("classical,")
