"""Independent reference solvers used for cross-validation.

The density-only solver shares the face-velocity and donor-cell flux
path of the main kernels so that matched-parameter comparisons isolate
the age dimension as the only difference.  The space-homogeneous
renewal solver is a deliberately separate straight-line implementation:
when used as an oracle it guards against bugs shared with the main
code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from . import kernels
from .errors import NumericsError


@dataclass
class ClassicalState:
    """Density-only model state: d_t rho - div(rho grad p) = rho * Phi(p)."""

    t: float
    rho: np.ndarray
    m: float


def classical_step(state, Phi, grid, dt, p_M=None):
    """One explicit conservative step of the density-only model.

    Uses the identical face-velocity and donor-cell flux discretization
    as the main solver's spatial transport, plus the pointwise reaction
    rho * Phi(p).  When p_M is given, dt is checked against the same
    a-priori diffusion limit the main solver uses.
    """
    rho = np.asarray(state.rho, dtype=float)
    p = gridmod.pressure_of_density(rho, state.m)
    faces = gridmod.gradient_pressure(p, grid)
    umax = gridmod.max_face_speed(faces)
    if umax > 0.0 and dt > (grid.dx / umax) * kernels.CFL_SLACK:
        raise NumericsError(
            f"classical advection CFL violated: dt = {dt:.3e} > {grid.dx / umax:.3e}")
    if p_M is not None:
        cfl_diff = grid.dx ** 2 / (2.0 * grid.d * (state.m - 1.0) * p_M)
        if dt > cfl_diff * kernels.CFL_SLACK:
            raise NumericsError(
                f"classical diffusion CFL violated: dt = {dt:.3e} > {cfl_diff:.3e}")
    div = kernels.upwind_divergence(rho, faces, grid)
    rho_new = rho - dt * div + dt * rho * np.asarray(Phi(p), dtype=float)
    return ClassicalState(t=state.t + dt, rho=rho_new, m=state.m)


@dataclass
class HomogeneousState:
    """Space-homogeneous renewal model state: n over age only."""

    t: float
    n: np.ndarray


def homogeneous_step(state, beta, mu, dt, dtheta):
    """One upwind step of the renewal model at unit aging speed.

    d_t n + d_theta n = -(beta + mu) n with inflow 2 * integral(beta n)
    at age zero; first-order upwind with the inflow as ghost value.  The
    division and death sinks act on the transported state, which keeps
    the update nonnegative up to the unit Courant number (a sink applied
    to the pre-transport value dips negative at sharp trailing edges).
    """
    if dt > dtheta * kernels.CFL_SLACK:
        raise NumericsError(
            f"homogeneous age CFL violated: dt = {dt:.3e} > dtheta = {dtheta:.3e}")
    n = np.asarray(state.n, dtype=float)
    theta = (np.arange(n.size) + 0.5) * dtheta
    beta_vals = np.asarray(beta(theta), dtype=float)
    mu_vals = np.asarray(mu(theta), dtype=float)
    b = 2.0 * float(np.sum(beta_vals * n)) * dtheta
    C = dt / dtheta
    moved = np.empty_like(n)
    moved[0] = n[0] - C * (n[0] - b)
    moved[1:] = n[1:] - C * (n[1:] - n[:-1])
    n_new = moved * (1.0 - dt * (beta_vals + mu_vals))
    return HomogeneousState(t=state.t + dt, n=n_new)


def write_series_csv(path, tag, columns, rows):
    """Oracle CSV output; same conventions as the main solver plus a
    solver-tag column."""
    lines = ["solver," + ",".join(columns)]
    for row in rows:
        lines.append(tag + "," + ",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
