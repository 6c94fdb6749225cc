"""Observables connecting finite-exponent runs to the stiff-pressure limit:
graph defect, weak complementarity residual, front kinematics, and
age-structure summaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grid as gridmod
from . import kernels
from . import params as paramsmod
from .errors import ConfigError


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def _bump_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui)) * (-2.0 * ui / (1.0 - ui * ui) ** 2)
    return out


@dataclass(frozen=True)
class BumpTestFunction:
    """C^1 compactly supported bump, tensor product across spatial axes."""

    center: tuple
    width: float

    def _axis_values(self, grid):
        return [(_bump((grid.x_centers - c) / self.width),
                 _bump_prime((grid.x_centers - c) / self.width) / self.width)
                for c in self.center]

    def values(self, grid):
        ax = self._axis_values(grid)
        if grid.d == 1:
            return ax[0][0]
        return np.multiply.outer(ax[0][0], ax[1][0])

    def gradients(self, grid):
        ax = self._axis_values(grid)
        if grid.d == 1:
            return [ax[0][1]]
        return [np.multiply.outer(ax[0][1], ax[1][0]),
                np.multiply.outer(ax[0][0], ax[1][1])]


def default_test_functions(grid):
    """Three concentric bumps at increasing scale, centered on the box middle.

    Fixed and documented so residuals are comparable across exponent
    sweeps.  The scales keep the bump supports inside the saturated
    region of the default runs: across the free boundary the discrete
    weak form carries an O(dx) integration error that does not shrink
    with the exponent, which would mask the limit trend.
    """
    center = (0.0,) * grid.d
    return [BumpTestFunction(center=center, width=f * grid.L)
            for f in (0.15, 0.22, 0.3)]


def tabulate_test_functions(grid, test_functions=None):
    if test_functions is None:
        test_functions = default_test_functions(grid)
    return [(tf.values(grid), tf.gradients(grid)) for tf in test_functions]


def hele_shaw_defect(state, grid):
    """Distance to the stiff-limit graph: integral of p*|1 - min(rho, 1)|
    plus the excess part p*(rho - 1)^+.

    Zero exactly on the graph (p = 0 where rho < 1, rho = 1 where p > 0);
    for rho <= 1 it reduces to the integral of p*(1 - rho).
    """
    rho = state.rho
    p = state.p
    val = p * np.abs(1.0 - np.minimum(rho, 1.0)) + p * np.maximum(rho - 1.0, 0.0)
    return float(val.sum() * grid.cell_volume)


def center_gradient(p, grid, faces=None):
    """grad p at cell centers, face-averaged; zero-gradient boundary closure."""
    if faces is None:
        faces = gridmod.gradient_pressure(p, grid)
    grads = []
    for a, u in enumerate(faces):
        lo = u[kernels._axslice(u.ndim, a, slice(None, -1))]
        hi = u[kernels._axslice(u.ndim, a, slice(1, None))]
        grads.append(-0.5 * (lo + hi))
    return grads


def growth_field(state, grid, params, reaction_extra=0, nu_vals=None, r_vals=None):
    """Age-integrated growth coefficient G(x) = sum_j n*(F - extra*mu*V) dtheta."""
    if nu_vals is None:
        nu_vals = kernels.evaluate_nu(state.p, grid, params)
    if r_vals is None:
        r_vals = np.asarray(params.r(state.p), dtype=float)
    th = grid.theta_centers
    col = (-1,) + (1,) * grid.d
    V_col = np.asarray(params.V(th), dtype=float).reshape(col)
    Vp_col = np.asarray(params.V_prime(th), dtype=float).reshape(col)
    muV_col = np.asarray(params.mu(th), dtype=float).reshape(col) * V_col
    F_vals = r_vals * (Vp_col + (2.0 * params.V0 - V_col) * nu_vals) - muV_col
    G = (state.n * F_vals).sum(axis=0) * grid.dtheta
    if reaction_extra:
        G = G - reaction_extra * (state.n * muV_col).sum(axis=0) * grid.dtheta
    return G


def complementarity_residual(state, grid, params, test_functions=None,
                             reaction_extra=0, phi_fields=None,
                             nu_vals=None, r_vals=None, faces=None):
    """Weak residual of p*(Laplacian p + growth) for each test function.

    R(phi) = integral of phi*(-|grad p|^2 + p*G) - p*(grad phi . grad p)
    over the box, with grad p face-averaged to cell centers and G the
    age-integrated growth coefficient.  ``reaction_extra`` switches in
    the extra death term -mu*V under the age integral; both variants are
    reported by the sweep harness because the limit identity is stated
    both ways.
    """
    if phi_fields is None:
        phi_fields = tabulate_test_functions(grid, test_functions)
    gp = center_gradient(state.p, grid, faces=faces)
    gp2 = sum(g * g for g in gp)
    G = growth_field(state, grid, params, reaction_extra=reaction_extra,
                     nu_vals=nu_vals, r_vals=r_vals)
    out = []
    for phi, gphi in phi_fields:
        cross = sum(ga * gb for ga, gb in zip(gphi, gp))
        integrand = phi * (-gp2 + state.p * G) - state.p * cross
        out.append(float(integrand.sum() * grid.cell_volume))
    return out


def front_position(p, grid, threshold):
    """Outermost crossing of p = threshold, linearly interpolated.

    d = 1 tracks the positive-x front; d = 2 returns the angular-mean
    radius over 32 rays from the box center.  NaN when no crossing
    exists.
    """
    p = np.asarray(p, dtype=float)
    if grid.d == 1:
        above = p > threshold
        if not above.any():
            return float("nan")
        i = int(np.max(np.nonzero(above)[0]))
        if i == grid.N_x - 1:
            return float(grid.x_centers[-1])
        x_i = grid.x_centers[i]
        p_i, p_next = p[i], p[i + 1]
        return float(x_i + grid.dx * (p_i - threshold) / (p_i - p_next))
    return _front_radius_2d(p, grid, threshold)


def _front_radius_2d(p, grid, threshold, n_angles=32):
    radii = []
    r_samples = np.arange(0.0, grid.L, grid.dx / 2.0)
    for ang in np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False):
        xs = r_samples * np.cos(ang)
        ys = r_samples * np.sin(ang)
        vals = _bilinear(p, grid, xs, ys)
        above = vals > threshold
        if not above.any():
            continue
        i = int(np.max(np.nonzero(above)[0]))
        if i == len(r_samples) - 1:
            radii.append(r_samples[-1])
            continue
        v_i, v_next = vals[i], vals[i + 1]
        frac = (v_i - threshold) / (v_i - v_next)
        radii.append(r_samples[i] + frac * (r_samples[i + 1] - r_samples[i]))
    if not radii:
        return float("nan")
    return float(np.mean(radii))


def _bilinear(field, grid, xs, ys):
    gx = np.clip((xs - grid.x_centers[0]) / grid.dx, 0, grid.N_x - 1)
    gy = np.clip((ys - grid.x_centers[0]) / grid.dx, 0, grid.N_x - 1)
    i0 = np.clip(gx.astype(int), 0, grid.N_x - 2)
    j0 = np.clip(gy.astype(int), 0, grid.N_x - 2)
    fx = gx - i0
    fy = gy - j0
    return (field[i0, j0] * (1 - fx) * (1 - fy) + field[i0 + 1, j0] * fx * (1 - fy)
            + field[i0, j0 + 1] * (1 - fx) * fy + field[i0 + 1, j0 + 1] * fx * fy)


def gradient_at_front(p, grid, threshold, faces=None):
    """|grad p| at the tracked front, from the cells just inside it; NaN
    without a front.

    The pressure slope peaks at the free boundary and decays inward on
    the scale of the local growth rate, so point-sampling a cell inside
    understates the interface slope by O(growth * dx / |grad p|^2).  In
    1D the slope is instead reconstructed by a one-sided quadratic
    through the two cells inside the crossing, pinned to the threshold
    value at the interpolated front position, and extrapolated to the
    pressure-zero level (at a quadratic's root the slope magnitude is
    the square root of its discriminant).
    """
    p = np.asarray(p, dtype=float)
    if faces is None:
        faces = gridmod.gradient_pressure(p, grid)
    if grid.d == 1:
        above = p > threshold
        if not above.any():
            return float("nan")
        i = int(np.max(np.nonzero(above)[0]))
        if i == 0 or i == grid.N_x - 1:
            return float(np.max(np.abs(faces[0][max(i, 1) - 1:i + 2])))
        x_f = front_position(p, grid, threshold)
        d1 = x_f - grid.x_centers[i]
        if d1 < 1e-3 * grid.dx:
            # crossing sits on the cell center; shift the stencil inward
            i -= 1
            d1 += grid.dx
            if i == 0:
                return float(np.max(np.abs(faces[0][i:i + 3])))
        d2 = d1 + grid.dx
        q1 = p[i] - threshold
        q2 = p[i - 1] - threshold
        slope = (q2 * d1 * d1 - q1 * d2 * d2) / (d1 * d2 * (d1 - d2))
        curv2 = (q1 * d2 - q2 * d1) / (d1 * d2 * (d1 - d2))
        disc = slope * slope - 4.0 * curv2 * threshold
        if disc > 0.0:
            return float(np.sqrt(disc))
        return float(abs(slope))
    grads = center_gradient(p, grid, faces=faces)
    mag = np.sqrt(sum(g * g for g in grads))
    pos = _front_radius_2d(p, grid, threshold)
    if not np.isfinite(pos):
        return float("nan")
    radius = grid.radius_field()
    ring = (radius > pos - 1.5 * grid.dx) & (radius <= pos - 0.5 * grid.dx) & (p > threshold)
    if not ring.any():
        ring = (np.abs(radius - pos) < grid.dx) & (p > threshold)
        if not ring.any():
            return float("nan")
    return float(mag[ring].mean())


def speeds_from_series(t, position):
    """Centered-difference speeds of a front-position series (one-sided ends)."""
    t = np.asarray(t, dtype=float)
    position = np.asarray(position, dtype=float)
    k = len(t)
    speeds = np.zeros(k)
    if k >= 2:
        speeds[0] = (position[1] - position[0]) / (t[1] - t[0])
        speeds[-1] = (position[-1] - position[-2]) / (t[-1] - t[-2])
    if k >= 3:
        speeds[1:-1] = (position[2:] - position[:-2]) / (t[2:] - t[:-2])
    return speeds


def front_kinematics(history, grid, threshold):
    """(position, speed, |grad p| inside the front) for a list of states.

    Needs at least two snapshots for the finite-difference speeds.
    """
    if len(history) < 2:
        raise ConfigError("front_kinematics needs at least 2 snapshots")
    t = np.array([s.t for s in history])
    pos = np.array([front_position(s.p, grid, threshold) for s in history])
    grad = np.array([gradient_at_front(s.p, grid, threshold) for s in history])
    return list(zip(pos, speeds_from_series(t, pos), grad))


def age_summaries(state, grid, params, nu_sup=None,
                  threshold=gridmod.SUPPORT_THRESHOLD, nu_vals=None):
    """Mean age and proliferating fraction per spatial cell.

    proliferating_fraction = sum_j nu(theta_j, p) n_j dtheta
                             / (sup nu * sum_j n_j dtheta);
    both fields are NaN-masked where the local cell count falls below
    the threshold.
    """
    if nu_vals is None:
        nu_vals = kernels.evaluate_nu(state.p, grid, params)
    if nu_sup is None:
        nu_sup = paramsmod.function_bounds(params).sup_nu
    number = state.n.sum(axis=0) * grid.dtheta
    valid = number > threshold
    th_col = kernels.theta_column(grid)
    age_mass = (state.n * th_col).sum(axis=0) * grid.dtheta
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_age = np.where(valid, age_mass / number, np.nan)
        division_mass = (nu_vals * state.n).sum(axis=0) * grid.dtheta
        prolif = np.where(valid & (nu_sup > 0), division_mass / (nu_sup * number), np.nan)
    return mean_age, prolif


def entropy(n, grid):
    """Integral of n log_+ n over age and space."""
    n = np.asarray(n, dtype=float)
    big = n > 1.0
    vals = np.zeros_like(n)
    vals[big] = n[big] * np.log(n[big])
    return float(vals.sum() * grid.dtheta * grid.cell_volume)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-step scalar observables written to the diagnostics CSV."""

    t: float
    dt: float
    total_mass: float
    rho_L1: float
    rho_Linf: float
    p_Linf: float
    entropy: float
    hs_defect: float
    comp_residual: tuple
    support_radius_x: float
    support_extent_theta: float
    front_position: float
    front_speed: float
    grad_p_at_front: float
    mean_age_avg: float
    prolif_max: float
    prolif_argmax_x: float
    prolif_at_center: float


def _center_value(field, grid):
    # mean over the 2^d cells around the box center
    mid = grid.N_x // 2
    if grid.d == 1:
        vals = field[mid - 1:mid + 1]
    else:
        vals = field[mid - 1:mid + 1, mid - 1:mid + 1]
    vals = vals[np.isfinite(vals)]
    return float(vals.mean()) if vals.size else float("nan")


# cell-count mask for the summary statistics of a record: excludes the
# steeply decaying numerical foot of the front (which sits orders of
# magnitude above true zeros but carries negligible population) from
# argmax/average reductions
SUMMARY_MASK = 1e-8


def compute_record(state, grid, params, *, phi_fields, reaction_extra,
                   front_threshold, nu_sup, dt=0.0,
                   nu_vals=None, r_vals=None, faces=None,
                   summary_threshold=SUMMARY_MASK):
    """Assemble the full diagnostics row for one state.

    ``front_speed`` is filled with 0.0 here; the run loop overwrites it
    in a post-pass once the whole position series is known.
    """
    if nu_vals is None:
        nu_vals = kernels.evaluate_nu(state.p, grid, params)
    if r_vals is None:
        r_vals = np.asarray(params.r(state.p), dtype=float)
    if faces is None:
        faces = gridmod.gradient_pressure(state.p, grid)
    w = grid.cell_volume
    residual = complementarity_residual(
        state, grid, params, reaction_extra=reaction_extra,
        phi_fields=phi_fields, nu_vals=nu_vals, r_vals=r_vals, faces=faces)
    mean_age, prolif = age_summaries(state, grid, params, nu_sup=nu_sup,
                                     nu_vals=nu_vals,
                                     threshold=summary_threshold)
    number = state.n.sum(axis=0) * grid.dtheta
    valid = np.isfinite(mean_age)
    if valid.any():
        mean_age_avg = float((mean_age[valid] * number[valid]).sum()
                             / number[valid].sum())
    else:
        mean_age_avg = float("nan")
    finite_prolif = np.isfinite(prolif)
    if finite_prolif.any():
        flat = np.where(finite_prolif, prolif, -np.inf)
        arg = np.unravel_index(int(np.argmax(flat)), prolif.shape)
        prolif_max = float(prolif[arg])
        prolif_argmax_x = float(grid.radius_field()[arg])
    else:
        prolif_max = 0.0
        prolif_argmax_x = float("nan")
    radius_x, extent_theta = gridmod.support_radii(state, grid)
    return DiagnosticsRecord(
        t=float(state.t),
        dt=float(dt),
        total_mass=float(state.n.sum() * grid.dtheta * w),
        rho_L1=float(state.rho.sum() * w),
        rho_Linf=float(state.rho.max()),
        p_Linf=float(state.p.max()),
        entropy=entropy(state.n, grid),
        hs_defect=hele_shaw_defect(state, grid),
        comp_residual=tuple(residual),
        support_radius_x=radius_x,
        support_extent_theta=extent_theta,
        front_position=front_position(state.p, grid, front_threshold),
        front_speed=0.0,
        grad_p_at_front=gradient_at_front(state.p, grid, front_threshold,
                                          faces=faces),
        mean_age_avg=mean_age_avg,
        prolif_max=prolif_max,
        prolif_argmax_x=prolif_argmax_x,
        prolif_at_center=_center_value(prolif, grid),
    )


BASE_COLUMNS = ("t", "dt", "total_mass", "rho_L1", "rho_Linf", "p_Linf",
                "entropy", "hs_defect")
TAIL_COLUMNS = ("support_radius_x", "support_extent_theta", "front_position",
                "front_speed", "grad_p_at_front", "mean_age_avg",
                "prolif_max", "prolif_argmax_x", "prolif_at_center")


def csv_columns(n_test_functions):
    residuals = tuple(f"comp_residual_{i}" for i in range(n_test_functions))
    return BASE_COLUMNS + residuals + TAIL_COLUMNS


def format_value(x):
    return repr(float(x))


def record_row(rec):
    vals = [rec.t, rec.dt, rec.total_mass, rec.rho_L1, rec.rho_Linf,
            rec.p_Linf, rec.entropy, rec.hs_defect]
    vals.extend(rec.comp_residual)
    vals.extend([rec.support_radius_x, rec.support_extent_theta,
                 rec.front_position, rec.front_speed, rec.grad_p_at_front,
                 rec.mean_age_avg, rec.prolif_max, rec.prolif_argmax_x,
                 rec.prolif_at_center])
    return ",".join(format_value(v) for v in vals)


def write_records_csv(path, records, reaction_extra, extra_header=()):
    """Write diagnostics rows with a fixed, documented column order."""
    n_res = len(records[0].comp_residual) if records else 3
    lines = [
        "# diagnostics of the age-structured growth simulator",
        "# units: model time / space / age; mass = sum n dtheta dx^d",
        f"# reaction_extra = {reaction_extra}",
    ]
    lines.extend(extra_header)
    lines.append(",".join(csv_columns(n_res)))
    lines.extend(record_row(r) for r in records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
