"""Tensor grid over age and space, the simulation state, and field primitives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

# separates true zeros of the scheme from round-off noise
SUPPORT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Grid:
    """Cell-centered finite-volume grid on [0, Theta_max] x [-L, L]^d."""

    d: int
    N_theta: int
    Theta_max: float
    N_x: int
    L: float
    dtheta: float
    dx: float
    theta_centers: np.ndarray
    x_centers: np.ndarray

    @classmethod
    def make(cls, d, N_theta, Theta_max, N_x, L):
        if d not in (1, 2):
            raise ConfigError(f"spatial dimension must be 1 or 2, got {d}")
        if N_theta < 2 or N_x < 2:
            raise ConfigError("need at least 2 cells along every axis")
        if not (Theta_max > 0 and L > 0):
            raise ConfigError("Theta_max and L must be positive")
        dtheta = Theta_max / N_theta
        dx = 2.0 * L / N_x
        theta_centers = (np.arange(N_theta) + 0.5) * dtheta
        x_centers = -L + (np.arange(N_x) + 0.5) * dx
        return cls(d=d, N_theta=int(N_theta), Theta_max=float(Theta_max),
                   N_x=int(N_x), L=float(L), dtheta=dtheta, dx=dx,
                   theta_centers=theta_centers, x_centers=x_centers)

    @property
    def spatial_shape(self):
        return (self.N_x,) * self.d

    @property
    def shape(self):
        return (self.N_theta,) + self.spatial_shape

    @property
    def cell_volume(self):
        return self.dx ** self.d

    def radius_field(self):
        """|x| at every spatial cell center."""
        if self.d == 1:
            return np.abs(self.x_centers)
        X, Y = np.meshgrid(self.x_centers, self.x_centers, indexing="ij")
        return np.sqrt(X * X + Y * Y)

    def matches(self, other):
        return (self.d == other.d and self.N_theta == other.N_theta
                and self.N_x == other.N_x
                and self.Theta_max == other.Theta_max and self.L == other.L)


@dataclass
class State:
    """Cell-averaged distribution n plus the derived density and pressure.

    ``age_frac`` accumulates the fractional aging progress of every
    spatial column (in [0, dtheta)); it belongs to the age-transport
    discretization, not to the physical state.
    """

    t: float
    n: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    m: float
    age_frac: np.ndarray

    @property
    def v(self):
        """Stiff-pressure auxiliary field rho^m (gradient equals rho grad p)."""
        return self.rho ** self.m


def density_weights(grid, params):
    """Midpoint quadrature weights V(theta_j) * dtheta of the density integral."""
    return np.asarray(params.V(grid.theta_centers), dtype=float) * grid.dtheta


def integrate_density(state, grid, params):
    """Volume density rho(x) = sum_j V(theta_j) n(theta_j, x) dtheta."""
    return np.tensordot(density_weights(grid, params), state.n, axes=(0, 0))


def pressure_of_density(rho, m):
    """Pointwise pressure law p = m/(m-1) * rho^(m-1); requires m > 2."""
    if not m > 2:
        raise ConfigError(f"pressure exponent m must exceed 2, got {m}")
    return (m / (m - 1.0)) * np.asarray(rho, dtype=float) ** (m - 1.0)


def density_bound(m, p_M):
    """A-priori admissible density: rho <= ((m-1)/m * p_M)^(1/(m-1))."""
    return ((m - 1.0) / m * p_M) ** (1.0 / (m - 1.0))


def make_state(grid, params, n, m, t=0.0, age_frac=None):
    n = np.asarray(n, dtype=float)
    if n.shape != grid.shape:
        raise ConfigError(f"distribution shape {n.shape} does not match grid {grid.shape}")
    rho = np.tensordot(density_weights(grid, params), n, axes=(0, 0))
    p = pressure_of_density(rho, m)
    if age_frac is None:
        age_frac = np.zeros(grid.spatial_shape)
    return State(t=float(t), n=n, rho=rho, p=p, m=float(m), age_frac=age_frac)


def gradient_pressure(p, grid):
    """Face transport velocities u = -dp/dx per axis.

    Returns one array per axis with the face dimension one longer than
    the cell dimension; boundary faces carry zero velocity (no-flux,
    zero-gradient closure).
    """
    p = np.asarray(p, dtype=float)
    faces = []
    for a in range(grid.d):
        shape = list(p.shape)
        shape[a] += 1
        u = np.zeros(shape)
        interior = [slice(None)] * grid.d
        interior[a] = slice(1, -1)
        lo = [slice(None)] * grid.d
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.d
        hi[a] = slice(1, None)
        u[tuple(interior)] = -(p[tuple(hi)] - p[tuple(lo)]) / grid.dx
        faces.append(u)
    return faces


def max_face_speed(faces):
    return max(float(np.max(np.abs(u))) for u in faces)


def support_radii(state, grid, threshold=SUPPORT_THRESHOLD):
    """Outermost |x| with density above threshold and top age with any mass.

    Returns (-inf, -inf) sentinels when nothing exceeds the threshold.
    """
    if threshold < 0:
        raise ConfigError("support threshold must be nonnegative")
    mask_x = state.rho > threshold
    if np.any(mask_x):
        x_radius = float(np.max(grid.radius_field()[mask_x]))
    else:
        x_radius = float("-inf")
    col_max = state.n.reshape(grid.N_theta, -1).max(axis=1)
    mask_t = col_max > threshold
    if np.any(mask_t):
        theta_extent = float(grid.theta_centers[mask_t][-1])
    else:
        theta_extent = float("-inf")
    return x_radius, theta_extent


def boundary_density_max(rho, d):
    """Largest density on the outermost ring of spatial cells."""
    if d == 1:
        return float(max(rho[0], rho[-1]))
    return float(max(rho[0, :].max(), rho[-1, :].max(),
                     rho[:, 0].max(), rho[:, -1].max()))
