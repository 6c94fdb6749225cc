"""Coefficient functions of the pressure-limited growth model.

Four functions drive the dynamics: the aging speed r(p), the division
rate nu(theta, p), the death rate mu(theta), and the cell volume
V(theta).  The solver relies on the admissibility constraints encoded
here: rates nonnegative, r and nu nonincreasing in pressure and
vanishing at the homeostatic pressure p_M, volume pinned between V0 and
2*V0.  Presets provide families satisfying every constraint; arbitrary
user-supplied families are checked numerically by sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError

# slack used by all sampled sign and monotonicity checks
SIGN_TOL = 1e-9

# residual allowed on nu * (2*V0 - V) by the volume-preserving preset
CASE2_VOLUME_TOL = 1e-6

PRESETS = ("case1", "case2", "general")


@dataclass(frozen=True)
class ParameterSet:
    """Model coefficients plus the scalar bounds the solver needs.

    All callables are numpy-vectorized: ``r`` and ``mu`` map arrays to
    arrays, ``nu`` broadcasts an (age, pressure) pair, ``V`` and
    ``V_prime`` map age arrays to arrays.  Instances are immutable and
    safe to share across workers.
    """

    p_M: float
    r_max: float
    mu_max: float
    V0: float
    r: Callable
    nu: Callable
    mu: Callable
    V: Callable
    V_prime: Callable
    # age scale of the division window; validation probes [0, 10*theta_div]
    theta_div: float


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def default_parameters(preset, *, p_M=1.0, r_max=1.0, nu_max=120.0, mu0=0.02,
                       V0=1.0, k=1.0, theta_div=0.04, w=0.02):
    """Build a preset coefficient family.

    ``case1`` has constant cell volume, so growth is driven purely by
    division.  ``case2`` has age-dependent volume with division delayed
    until the volume has saturated at 2*V0, which makes mitosis
    volume-preserving up to CASE2_VOLUME_TOL.  ``general`` combines the
    age-dependent volume with the default division window.

    The division rate ramps up smoothly over [theta_div - w,
    theta_div + w] and is quadratically gated in pressure so it stays C^1
    at p_M; the aging speed uses a plain linear ramp, which is all its
    constraints require.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown parameter preset: {preset!r}")
    for name, value in (("p_M", p_M), ("r_max", r_max), ("V0", V0),
                        ("k", k), ("w", w), ("theta_div", theta_div)):
        if not value > 0:
            raise ConfigError(f"parameter {name} must be positive, got {value}")
    if nu_max < 0 or mu0 < 0:
        raise ConfigError("nu_max and mu0 must be nonnegative")

    if preset == "case2":
        # push the division window out to where 2*V0 - V(theta) has decayed
        # below V0 * CASE2_VOLUME_TOL, so division preserves total volume
        theta_div = np.log(1.0 / CASE2_VOLUME_TOL) / k + w
    lo = theta_div - w

    def r(p):
        return r_max * np.maximum(0.0, 1.0 - np.asarray(p, dtype=float) / p_M)

    def nu(theta, p):
        gate = np.maximum(0.0, 1.0 - np.asarray(p, dtype=float) / p_M) ** 2
        ramp = _smoothstep((np.asarray(theta, dtype=float) - lo) / (2.0 * w))
        return nu_max * ramp * gate

    def mu(theta):
        return np.full_like(np.asarray(theta, dtype=float), mu0)

    if preset == "case1":
        def V(theta):
            return np.full_like(np.asarray(theta, dtype=float), V0)

        def V_prime(theta):
            return np.zeros_like(np.asarray(theta, dtype=float))
    else:
        def V(theta):
            return V0 * (2.0 - np.exp(-k * np.asarray(theta, dtype=float)))

        def V_prime(theta):
            return V0 * k * np.exp(-k * np.asarray(theta, dtype=float))

    return ParameterSet(p_M=p_M, r_max=r_max, mu_max=mu0, V0=V0, r=r, nu=nu,
                        mu=mu, V=V, V_prime=V_prime, theta_div=theta_div)


def eval_F(params, theta, p):
    """Aggregated growth coefficient of the volume-density balance.

    F(theta, p) = r(p) * [V'(theta) + (2*V0 - V(theta)) * nu(theta, p)]
                  - mu(theta) * V(theta)

    Broadcasts over array arguments.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(theta < 0.0):
        raise DomainError("eval_F: age must be nonnegative")
    slack = 1e-12 * max(params.p_M, 1.0)
    if np.any(p < -slack) or np.any(p > params.p_M + slack):
        raise DomainError(f"eval_F: pressure outside [0, {params.p_M}]")
    V = params.V(theta)
    bracket = params.V_prime(theta) + (2.0 * params.V0 - V) * params.nu(theta, p)
    return params.r(p) * bracket - params.mu(theta) * V


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str
    where: Optional[tuple] = None
    value: Optional[float] = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"{mark}  {c.name}: {c.detail}")
        return "\n".join(lines)


def _first_violation(mask, coords, values):
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None, None
    first = tuple(idx[0])
    where = tuple(float(c[i]) for c, i in zip(coords, first))
    return where, float(values[first])


def validate_assumptions(params, n_samples=201):
    """Sample the coefficient functions and check every admissibility constraint.

    Functions are sampled on uniform grids over [0, p_M] in pressure and
    [0, 10*theta_div] in age; monotonicity is checked through finite
    differences.  Violations come back as failed report entries, never
    as exceptions.  The bounds on mu' and on the age variation of nu are
    recorded as informational entries: the model only needs them finite,
    and nothing downstream consumes them.
    """
    if n_samples < 2:
        raise ConfigError("validate_assumptions needs at least 2 samples")
    theta_probe = 10.0 * params.theta_div
    th = np.linspace(0.0, theta_probe, n_samples)
    pp = np.linspace(0.0, params.p_M, n_samples)
    dth = th[1] - th[0]
    checks = []

    def add(name, mask, coords, values, ok_detail, bad_detail):
        where, value = _first_violation(mask, coords, values)
        if where is None:
            checks.append(ValidationCheck(name, True, ok_detail))
        else:
            checks.append(ValidationCheck(
                name, False, bad_detail.format(where=where, value=value),
                where=where, value=value))

    r_vals = np.asarray(params.r(pp), dtype=float)
    add("r_range", (r_vals < -SIGN_TOL) | (r_vals > params.r_max + SIGN_TOL),
        (pp,), r_vals,
        f"0 <= r(p) <= {params.r_max} on the sampled grid",
        "r({where[0]:.6g}) = {value:.6g} outside [0, r_max]")
    dr = np.diff(r_vals)
    add("r_nonincreasing", dr > SIGN_TOL, (pp[1:],), dr,
        "r is nonincreasing on the sampled grid",
        "increasing step of {value:.3g} at p = {where[0]:.6g}")
    r_pM = float(np.asarray(params.r(params.p_M), dtype=float))
    checks.append(ValidationCheck(
        "r_zero_at_pM", abs(r_pM) <= SIGN_TOL * max(1.0, params.r_max),
        f"r(p_M) = {r_pM:.3g}", value=r_pM))

    nu_vals = np.asarray(params.nu(th[:, None], pp[None, :]), dtype=float)
    add("nu_nonneg", nu_vals < -SIGN_TOL, (th, pp), nu_vals,
        "nu >= 0 on the sampled grid",
        "nu({where[0]:.6g}, {where[1]:.6g}) = {value:.6g} < 0")
    dnu_p = np.diff(nu_vals, axis=1)
    add("nu_nonincreasing_in_p", dnu_p > SIGN_TOL, (th, pp[1:]), dnu_p,
        "nu is nonincreasing in p on the sampled grid",
        "increasing step of {value:.3g} at (theta, p) = {where}")
    nu_pM = np.asarray(params.nu(th, params.p_M), dtype=float)
    add("nu_zero_at_pM", np.abs(nu_pM) > SIGN_TOL, (th,), nu_pM,
        "nu(theta, p_M) = 0 on the sampled grid",
        "nu({where[0]:.6g}, p_M) = {value:.6g} != 0")
    dnu_th = np.abs(np.diff(nu_vals, axis=0)) / dth
    sup_dnu = float(dnu_th.max()) if dnu_th.size else 0.0
    checks.append(ValidationCheck(
        "nu_theta_variation_finite", np.isfinite(sup_dnu),
        f"sampled sup |d nu / d theta| = {sup_dnu:.3g}", value=sup_dnu))

    mu_vals = np.asarray(params.mu(th), dtype=float)
    add("mu_range", (mu_vals < -SIGN_TOL) | (mu_vals > params.mu_max + SIGN_TOL),
        (th,), mu_vals,
        f"0 <= mu(theta) <= {params.mu_max} on the sampled grid",
        "mu({where[0]:.6g}) = {value:.6g} outside [0, mu_max]")
    dmu = np.abs(np.diff(mu_vals)) / dth
    sup_dmu = float(dmu.max()) if dmu.size else 0.0
    checks.append(ValidationCheck(
        "mu_variation_finite", np.isfinite(sup_dmu),
        f"sampled sup |mu'| = {sup_dmu:.3g} (informational)", value=sup_dmu))

    V_vals = np.asarray(params.V(th), dtype=float)
    V0_actual = float(np.asarray(params.V(0.0), dtype=float))
    checks.append(ValidationCheck(
        "V_at_zero", abs(V0_actual - params.V0) <= SIGN_TOL * params.V0,
        f"V(0) = {V0_actual:.6g}, declared V0 = {params.V0}", value=V0_actual))
    dV = np.diff(V_vals)
    add("V_nondecreasing", dV < -SIGN_TOL, (th[1:],), dV,
        "V is nondecreasing on the sampled grid",
        "decreasing step of {value:.3g} at theta = {where[0]:.6g}")
    add("V_range",
        (V_vals < params.V0 - SIGN_TOL) | (V_vals > 2.0 * params.V0 + SIGN_TOL),
        (th,), V_vals,
        "V0 <= V(theta) <= 2*V0 on the sampled grid",
        "V({where[0]:.6g}) = {value:.6g} outside [V0, 2*V0]")

    return ValidationReport(tuple(checks))


@dataclass(frozen=True)
class SampledBounds:
    """Sampled suprema of the coefficient functions, used by runtime checks."""

    sup_abs_V_prime: float
    sup_nu: float
    # sup|V'| + V0 * sup nu; dominates F(theta, p) / r(p)
    growth_coeff: float
    sup_F_plus: float
    # sup F^+ / V0: growth rate of the total density in the L1 bound
    mass_growth_rate: float


def function_bounds(params, n_samples=201):
    theta_probe = 10.0 * params.theta_div
    th = np.linspace(0.0, theta_probe, n_samples)
    pp = np.linspace(0.0, params.p_M, n_samples)
    sup_vp = float(np.max(np.abs(np.asarray(params.V_prime(th), dtype=float))))
    sup_nu = float(np.max(np.asarray(params.nu(th[:, None], pp[None, :]), dtype=float)))
    F = eval_F(params, th[:, None], pp[None, :])
    sup_F_plus = max(float(np.max(F)), 0.0)
    return SampledBounds(
        sup_abs_V_prime=sup_vp,
        sup_nu=sup_nu,
        growth_coeff=sup_vp + params.V0 * sup_nu,
        sup_F_plus=sup_F_plus,
        mass_growth_rate=sup_F_plus / params.V0,
    )
