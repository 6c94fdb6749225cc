"""Time loop: operator splitting, runtime invariant checks, checkpoints.

The split order is fixed (Lie, first order): derived fields and step
budget, reaction sinks, renewal inflow plus age advance, spatial
transport, derived-field refresh.  The renewal integral is evaluated on
the state at the start of the step, so every kernel stays explicit and
the step is deterministic for fixed inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import diagnostics
from . import grid as gridmod
from . import kernels
from . import params as paramsmod
from .errors import ConfigError, InvariantError
from .grid import State

DEFAULT_TOLERANCES = {
    "pressure": 1e-8,       # slack on p <= p_M
    "density": 1e-8,        # slack on rho <= admissible bound
    "gronwall": 1e-6,       # relative slack on the L1 growth bound
    "support": 1e-12,       # treated-as-zero threshold for support checks
    "mass_ledger": 1e-12,   # relative closure of the per-step mass balance
    "entropy_C": None,      # entropy-monitor rate; None = from sampled bounds
}


def entropy_rate(params, bounds):
    """Default rate constant of the entropy monitor.

    The growth of the n log n integral is driven by the renewal inflow
    and the reaction terms, so the constant scales with the sampled
    coefficient bounds (the generous prefactor keeps the monitor from
    flagging admissible runs; it stays a monitor, never a gate).
    """
    return 4.0 * (1.0 + params.r_max * bounds.sup_nu + params.mu_max)


@dataclass
class SimConfig:
    """Run controls: exponent, horizon, stability factor, tolerances, output."""

    m: float
    T: float
    cfl_factor: float = 0.9
    invariant_tolerances: dict = field(default_factory=dict)
    output_every: int = 0               # checkpoint cadence in steps; 0 = none
    checkpoint_path: Optional[str] = None
    reaction_extra: int = 0
    test_functions: Optional[list] = None
    front_threshold: float = 1e-3

    def __post_init__(self):
        if not self.m > 2:
            raise ConfigError(f"pressure exponent m must exceed 2, got {self.m}")
        if self.T < 0:
            raise ConfigError(f"final time must be nonnegative, got {self.T}")
        if not 0.0 < self.cfl_factor <= 1.0:
            raise ConfigError(f"cfl_factor must lie in (0, 1], got {self.cfl_factor}")
        unknown = set(self.invariant_tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown invariant tolerances: {sorted(unknown)}")

    def tolerances(self):
        return {**DEFAULT_TOLERANCES, **self.invariant_tolerances}


@dataclass(frozen=True)
class InvariantViolation:
    step: int
    t: float
    name: str
    value: float
    bound: float

    def __str__(self):
        return (f"step {self.step} (t={self.t:.6g}): {self.name} "
                f"value {self.value:.6g} exceeds {self.bound:.6g}")


@dataclass
class RunResult:
    """Final state, per-state diagnostics rows, per-step series, violations."""

    final_state: State
    records: list
    violations: list
    series: dict
    steps: int

    @property
    def valid(self):
        return not self.violations


class _Workspace:
    """Per-run caches of grid- and parameter-dependent arrays."""

    def __init__(self, grid, params):
        self.Vw = gridmod.density_weights(grid, params)
        self.mu_col = kernels.mu_column(grid, params)
        self.bounds = paramsmod.function_bounds(params)


def _derive(n, m, ws):
    rho = np.tensordot(ws.Vw, n, axes=(0, 0))
    p = gridmod.pressure_of_density(rho, m)
    return rho, p


def _advance(state, grid, params, ws, cfl_factor, support_threshold, dt_cap=None):
    """One split step; returns (new_state, info) with the pre-step fields
    and the analytic mass increments needed by the conservation ledger."""
    rho, p = _derive(state.n, state.m, ws)
    cur = State(t=state.t, n=state.n, rho=rho, p=p, m=state.m,
                age_frac=state.age_frac)
    faces = gridmod.gradient_pressure(p, grid)
    budget = kernels.cfl_dt(cur, grid, params, cfl_factor, faces=faces)
    dt = budget.dt if dt_cap is None else min(budget.dt, dt_cap)
    r_vals = np.asarray(params.r(p), dtype=float)
    nu_vals = kernels.evaluate_nu(p, grid, params)
    loss = r_vals * nu_vals + ws.mu_col
    b = kernels.renewal_inflow(cur, grid, params, nu_vals=nu_vals)

    n1 = kernels.reaction(cur, grid, params, dt, loss=loss)
    mid = State(t=cur.t, n=n1, rho=rho, p=p, m=cur.m, age_frac=cur.age_frac)
    shift_mask = cur.age_frac + dt * r_vals >= grid.dtheta
    n2, acc2 = kernels.age_transport(mid, grid, params, b, dt,
                                     support_threshold=support_threshold,
                                     r_vals=r_vals)
    mid2 = State(t=cur.t, n=n2, rho=rho, p=p, m=cur.m, age_frac=acc2)
    n3 = kernels.spatial_advect(mid2, grid, dt, faces=faces,
                                cfl_diff=budget.cfl_diff)
    rho3, p3 = _derive(n3, cur.m, ws)
    new = State(t=cur.t + dt, n=n3, rho=rho3, p=p3, m=cur.m, age_frac=acc2)

    w = grid.cell_volume
    mass_pre = float(cur.n.sum()) * grid.dtheta * w
    mass_post = float(n3.sum()) * grid.dtheta * w
    d_react = -dt * float((loss * cur.n).sum()) * grid.dtheta * w
    inflow = dt * float((r_vals * b).sum()) * w
    outflow = grid.dtheta * float((n1[-1] * shift_mask).sum()) * w
    residual = mass_post - mass_pre - d_react - (inflow - outflow)
    ledger_rel = abs(residual) / max(mass_pre, mass_post, 1e-300)

    info = {
        "dt": dt, "budget": budget, "rho": rho, "p": p, "faces": faces,
        "r_vals": r_vals, "nu_vals": nu_vals, "b": b,
        "mass_pre": mass_pre, "mass_post": mass_post,
        "d_react": d_react, "d_age": inflow - outflow,
        "ledger_rel": ledger_rel,
    }
    return new, info


def step(state, grid, params, config, dt_cap=None):
    """Advance one split step and return the new state."""
    ws = _Workspace(grid, params)
    tol = config.tolerances()
    new, _ = _advance(state, grid, params, ws, config.cfl_factor,
                      tol["support"], dt_cap=dt_cap)
    return new


def _check_start(n0, grid, params, config, tol):
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != grid.shape:
        raise ConfigError(
            f"initial distribution shape {n0.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(n0)):
        raise ConfigError("initial distribution contains non-finite values")
    if n0.min() < 0.0:
        raise ConfigError("initial distribution must be nonnegative")
    bound = gridmod.density_bound(config.m, params.p_M)
    rho0 = np.tensordot(gridmod.density_weights(grid, params), n0, axes=(0, 0))
    if float(rho0.max()) > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"initial density violates the admissible bound: max rho0 = "
            f"{float(rho0.max()):.6g} > ((m-1)/m * p_M)^(1/(m-1)) = {bound:.6g}")
    if float(n0[-1].max()) > tol["support"]:
        raise ConfigError("initial age support touches the top of the age grid")
    if gridmod.boundary_density_max(rho0, grid.d) > tol["support"]:
        raise ConfigError("initial spatial support touches the box boundary")
    return n0, rho0


def run(initial_n, grid, params, config):
    """March the model to config.T.

    Appends one diagnostics row per retained state (including t = 0),
    checks the runtime invariants after every step, and writes
    checkpoints on the configured cadence.  Tolerance exceedances are
    recorded and the run continues; negativity, non-finite values, and
    boundary contact abort with InvariantError.
    """
    tol = config.tolerances()
    n0, rho0 = _check_start(initial_n, grid, params, config, tol)
    ws = _Workspace(grid, params)
    if tol["entropy_C"] is None:
        tol["entropy_C"] = entropy_rate(params, ws.bounds)
    state = gridmod.make_state(grid, params, n0, config.m)
    phi_fields = diagnostics.tabulate_test_functions(grid, config.test_functions)
    nu_sup = ws.bounds.sup_nu
    growth_rate = ws.bounds.mass_growth_rate
    rho0_L1 = float(rho0.sum()) * grid.cell_volume
    entropy0 = diagnostics.entropy(n0, grid)
    _, theta_extent0 = gridmod.support_radii(state, grid, tol["support"])
    rho_bound = gridmod.density_bound(config.m, params.p_M)

    records = []
    violations = []
    series = {k: [] for k in ("t", "dt", "max_p", "max_rho", "total_mass",
                              "ledger_rel", "entropy")}
    step_i = 0
    t_end = config.T
    eps_t = 1e-12 * max(t_end, 1.0)

    def record_state(st, dt, nu_vals=None, r_vals=None, faces=None):
        rec = diagnostics.compute_record(
            st, grid, params, phi_fields=phi_fields,
            reaction_extra=config.reaction_extra,
            front_threshold=config.front_threshold, nu_sup=nu_sup, dt=dt,
            nu_vals=nu_vals, r_vals=r_vals, faces=faces)
        records.append(rec)

    def checkpoint(st, idx, tag=None):
        if config.checkpoint_path is None:
            return
        from . import snapshot as snapmod
        os.makedirs(config.checkpoint_path, exist_ok=True)
        name = tag or f"checkpoint_{idx:08d}.snap"
        snapmod.save_snapshot(os.path.join(config.checkpoint_path, name),
                              grid, st, step=idx)

    while state.t < t_end - eps_t:
        next_state, info = _advance(state, grid, params, ws, config.cfl_factor,
                                    tol["support"], dt_cap=t_end - state.t)
        # the diagnostics row of the pre-step state reuses the fields the
        # step already evaluated
        pre = State(t=state.t, n=state.n, rho=info["rho"], p=info["p"],
                    m=state.m, age_frac=state.age_frac)
        record_state(pre, info["dt"], nu_vals=info["nu_vals"],
                     r_vals=info["r_vals"], faces=info["faces"])
        step_i += 1
        state = next_state
        _check_invariants(state, info, step_i, grid, params, tol, violations,
                          theta_extent0, growth_rate, rho0_L1, entropy0,
                          rho_bound, series)
        if config.output_every and step_i % config.output_every == 0:
            checkpoint(state, step_i)

    record_state(state, 0.0)
    checkpoint(state, step_i, tag="final.snap")

    positions = np.array([r.front_position for r in records])
    times = np.array([r.t for r in records])
    if len(records) >= 2 and np.all(np.isfinite(positions)):
        speeds = diagnostics.speeds_from_series(times, positions)
        records = [replace(r, front_speed=float(s))
                   for r, s in zip(records, speeds)]

    series_np = {k: np.asarray(v) for k, v in series.items()}
    return RunResult(final_state=state, records=records, violations=violations,
                     series=series_np, steps=step_i)


def _check_invariants(state, info, step_i, grid, params, tol, violations,
                      theta_extent0, growth_rate, rho0_L1, entropy0,
                      rho_bound, series):
    n = state.n
    if not np.all(np.isfinite(n)):
        raise InvariantError(f"non-finite distribution values at step {step_i}")
    n_min = float(n.min())
    if n_min < -1e-13 * max(1.0, float(n.max())):
        raise InvariantError(
            f"negative distribution value {n_min:.3e} at step {step_i}")
    if gridmod.boundary_density_max(state.rho, grid.d) > tol["support"]:
        raise InvariantError(
            f"tumor support reached the spatial boundary at step {step_i}; "
            "the box half-width L is too small for this run")

    max_p = float(state.p.max())
    max_rho = float(state.rho.max())
    mass = info["mass_post"]
    ent = diagnostics.entropy(n, grid)

    def record(name, value, bound):
        violations.append(InvariantViolation(step_i, state.t, name, value, bound))

    if max_p > params.p_M + tol["pressure"]:
        record("pressure_bound", max_p, params.p_M + tol["pressure"])
    if max_rho > rho_bound + tol["density"]:
        record("density_bound", max_rho, rho_bound + tol["density"])
    rho_L1 = float(state.rho.sum()) * grid.cell_volume
    gbound = np.exp(growth_rate * state.t) * rho0_L1 * (1.0 + tol["gronwall"])
    if rho_L1 > gbound:
        record("gronwall_L1", rho_L1, gbound)
    allowed = theta_extent0 + params.r_max * state.t + grid.dtheta
    j0 = int(np.searchsorted(grid.theta_centers, allowed, side="right"))
    if j0 < grid.N_theta:
        tail = float(n[j0:].max())
        if tail > tol["support"]:
            record("age_support", tail, tol["support"])
    C = tol["entropy_C"]
    ebound = np.exp(C * state.t) * (entropy0 + C * state.t)
    if ent > ebound:
        record("entropy_monitor", ent, ebound)
    if info["ledger_rel"] > tol["mass_ledger"]:
        record("mass_ledger", info["ledger_rel"], tol["mass_ledger"])

    series["t"].append(state.t)
    series["dt"].append(info["dt"])
    series["max_p"].append(max_p)
    series["max_rho"].append(max_rho)
    series["total_mass"].append(mass)
    series["ledger_rel"].append(info["ledger_rel"])
    series["entropy"].append(ent)
