"""Explicit per-step operators: reaction sinks, renewal plus age advance,
and pressure-driven spatial transport.

Every operator is a pure map from the current state arrays to new
arrays; composition order is owned by the stepper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .errors import InvariantError, NumericsError

# float-safe slack for comparisons against stability limits
CFL_SLACK = 1.0 + 1e-12


@dataclass(frozen=True)
class StepBudget:
    """A stable time increment and the three candidate limits behind it."""

    dt: float
    cfl_age: float
    cfl_space: float
    cfl_diff: float


def cfl_dt(state, grid, params, cfl_factor, faces=None):
    """Stable dt: cfl_factor * min(age, advection, diffusion limits).

    The diffusion limit treats spatial transport as degenerate diffusion
    of rho with diffusivity at most (m-1)*p_M: grad(rho^m) = rho grad p,
    and rho^(m-1) <= (m-1)/m * p_M a priori.  Using the a-priori bound
    instead of the instantaneous field keeps dt from shrinking mid-run.
    """
    if not 0.0 < cfl_factor <= 1.0:
        raise NumericsError(f"cfl_factor must lie in (0, 1], got {cfl_factor}")
    if faces is None:
        faces = gridmod.gradient_pressure(state.p, grid)
    umax = gridmod.max_face_speed(faces)
    cfl_age = grid.dtheta / params.r_max
    cfl_space = grid.dx / umax if umax > 0.0 else np.inf
    cfl_diff = grid.dx ** 2 / (2.0 * grid.d * (state.m - 1.0) * params.p_M)
    dt = cfl_factor * min(cfl_age, cfl_space, cfl_diff)
    if not dt > 0.0:
        raise NumericsError("degenerate grid produced a nonpositive dt")
    return StepBudget(dt=dt, cfl_age=cfl_age, cfl_space=cfl_space, cfl_diff=cfl_diff)


def theta_column(grid):
    """Age centers shaped to broadcast against spatial fields."""
    return grid.theta_centers.reshape((-1,) + (1,) * grid.d)


def evaluate_nu(p, grid, params):
    """Division rate on the full (age, space) grid for the pressure field p."""
    return np.asarray(params.nu(theta_column(grid), p), dtype=float)


def mu_column(grid, params):
    return np.asarray(params.mu(grid.theta_centers), dtype=float).reshape(
        (-1,) + (1,) * grid.d)


def renewal_inflow(state, grid, params, nu_vals=None):
    """Newborn boundary density b(x) = 2 * sum_j nu(theta_j, p) n_j dtheta."""
    if nu_vals is None:
        nu_vals = evaluate_nu(state.p, grid, params)
    return 2.0 * grid.dtheta * (nu_vals * state.n).sum(axis=0)


def age_transport(state, grid, params, b, dt,
                  support_threshold=gridmod.SUPPORT_THRESHOLD, r_vals=None):
    """Advance the age coordinate at speed r(p(x)) with inflow b at age zero.

    Aging progress r(p)*dt accumulates per spatial column in
    state.age_frac; a column shifts up one whole cell exactly when the
    accumulated progress reaches dtheta.  Each shift is a unit-Courant
    upwind step, so the scheme is exact along characteristics and the
    age support grows by one cell per dtheta of accumulated progress,
    never through fractional smearing.  Newborn mass enters the first
    cell in flux form (rate r*b) every step.

    Returns (n, age_frac).
    """
    if r_vals is None:
        r_vals = np.asarray(params.r(state.p), dtype=float)
    rmax = float(np.max(r_vals)) if r_vals.size else 0.0
    if rmax * dt > grid.dtheta * CFL_SLACK:
        raise NumericsError(
            f"age CFL violated: max r*dt = {rmax * dt:.3e} > dtheta = {grid.dtheta:.3e}")
    n = state.n
    top = float(np.max(n[-1]))
    if top > support_threshold:
        raise InvariantError(
            f"age support reached the top of the age grid (max n in last cell = {top:.3e}); "
            "Theta_max is too small for this run")
    acc = state.age_frac + dt * r_vals
    mask = acc >= grid.dtheta
    if np.any(mask):
        shifted = np.concatenate([np.zeros((1,) + n.shape[1:]), n[:-1]], axis=0)
        n_new = np.where(mask, shifted, n)
        acc = np.where(mask, acc - grid.dtheta, acc)
    else:
        n_new = n.copy()
    n_new[0] = n_new[0] + (dt / grid.dtheta) * r_vals * b
    return n_new, acc


def reaction(state, grid, params, dt, loss=None):
    """Pointwise sinks: division removal r*nu*n plus death mu*n, explicit Euler."""
    if loss is None:
        r_vals = np.asarray(params.r(state.p), dtype=float)
        loss = r_vals * evaluate_nu(state.p, grid, params) + mu_column(grid, params)
    worst = dt * float(np.max(loss))
    if worst >= 1.0:
        raise NumericsError(
            f"reaction positivity violated: dt * max(r*nu + mu) = {worst:.3g} >= 1")
    return state.n * (1.0 - dt * loss)


def _axslice(ndim, axis, s):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def upwind_divergence(arr, faces, grid):
    """Divergence of the donor-cell fluxes of arr under the face velocities.

    arr may carry leading non-spatial axes (the age axis); boundary
    faces contribute zero flux, so summing the result over all cells
    telescopes to zero.
    """
    arr = np.asarray(arr, dtype=float)
    div = np.zeros_like(arr)
    for a, u in enumerate(faces):
        ax = arr.ndim - grid.d + a
        u_int = u[_axslice(u.ndim, a, slice(1, -1))]
        left = arr[_axslice(arr.ndim, ax, slice(None, -1))]
        right = arr[_axslice(arr.ndim, ax, slice(1, None))]
        flux = u_int * np.where(u_int > 0.0, left, right)
        # cell i gains flux[i-1] and loses flux[i]; boundary fluxes are zero
        div[_axslice(arr.ndim, ax, slice(None, -1))] += flux / grid.dx
        div[_axslice(arr.ndim, ax, slice(1, None))] -= flux / grid.dx
    return div


def spatial_advect(state, grid, dt, faces=None, cfl_diff=None):
    """Conservative donor-cell transport of every age slice along -grad p."""
    if faces is None:
        faces = gridmod.gradient_pressure(state.p, grid)
    umax = gridmod.max_face_speed(faces)
    if umax > 0.0 and dt > (grid.dx / umax) * CFL_SLACK:
        raise NumericsError(
            f"advection CFL violated: dt = {dt:.3e} > dx/|u| = {grid.dx / umax:.3e}")
    if cfl_diff is not None and dt > cfl_diff * CFL_SLACK:
        raise NumericsError(
            f"diffusion CFL violated: dt = {dt:.3e} > {cfl_diff:.3e}")
    return state.n - dt * upwind_divergence(state.n, faces, grid)
