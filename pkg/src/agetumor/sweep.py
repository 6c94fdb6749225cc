"""Exponent-sweep harness: runs the model at an increasing sequence of
pressure exponents and computes the trend metrics standing in for the
stiff-pressure limit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics
from . import grid as gridmod
from .errors import ConfigError, SimulationError
from .stepper import SimConfig, run


@dataclass
class SweepPlan:
    """Shared grid, parameters, horizon, and initial data for every exponent.

    The same initial distribution is used for every m, so its density
    must satisfy the admissible bound of the smallest exponent (the
    binding one).
    """

    m_values: tuple
    grid: object
    params: object
    T: float
    initial_n: np.ndarray
    cfl_factor: float = 0.9
    invariant_tolerances: dict = field(default_factory=dict)
    test_functions: Optional[list] = None
    reaction_extra: int = 0
    front_threshold: float = 1e-3
    hs_tol: Optional[float] = None      # None: defect(m_min) / 10

    def __post_init__(self):
        self.m_values = tuple(float(m) for m in self.m_values)
        if not self.m_values:
            raise ConfigError("sweep needs at least one exponent")
        if any(m <= 2 for m in self.m_values):
            raise ConfigError("every sweep exponent must exceed 2")
        if any(b <= a for a, b in zip(self.m_values, self.m_values[1:])):
            raise ConfigError("sweep exponents must be strictly increasing")


@dataclass
class SweepEntry:
    m: float
    ok: bool
    error: str = ""
    hs_defect: float = float("nan")
    comp_residual: tuple = ()
    comp_residual_extra: tuple = ()
    p_final: Optional[np.ndarray] = None
    result: Optional[object] = None


@dataclass
class SweepReport:
    entries: list
    distances: list
    verdicts: dict

    def entry(self, m):
        for e in self.entries:
            if e.m == m:
                return e
        raise KeyError(m)


def compare_fields(a, b, norm, cell_volume):
    """Discrete norm of a - b with cell-volume weights; shapes must match."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"field shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    if norm == "L1":
        return float(np.sum(np.abs(diff)) * cell_volume)
    if norm == "L2":
        return float(np.sqrt(np.sum(diff * diff) * cell_volume))
    if norm == "Linf":
        return float(np.max(np.abs(diff))) if diff.size else 0.0
    raise ConfigError(f"unknown norm {norm!r}")


def _nonincreasing(values, allowed_increases=0):
    bad = sum(1 for a, b in zip(values, values[1:])
              if b > a * (1.0 + 1e-12) + 1e-300)
    return bad <= allowed_increases


def run_sweep(plan):
    """Run every exponent, then compute defect and residual trends.

    Runs execute sequentially in exponent order so the report is
    bit-reproducible.  A failed run becomes a failure entry; metrics and
    verdicts are computed over the runs that finished.
    """
    bound = gridmod.density_bound(min(plan.m_values), plan.params.p_M)
    rho0 = np.tensordot(gridmod.density_weights(plan.grid, plan.params),
                        np.asarray(plan.initial_n, dtype=float), axes=(0, 0))
    if float(rho0.max()) > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"shared initial density exceeds the bound of the smallest exponent "
            f"({float(rho0.max()):.6g} > {bound:.6g})")

    phi_fields = diagnostics.tabulate_test_functions(plan.grid, plan.test_functions)
    entries = []
    for m in plan.m_values:
        config = SimConfig(m=m, T=plan.T, cfl_factor=plan.cfl_factor,
                           invariant_tolerances=dict(plan.invariant_tolerances),
                           reaction_extra=plan.reaction_extra,
                           test_functions=plan.test_functions,
                           front_threshold=plan.front_threshold)
        try:
            result = run(plan.initial_n, plan.grid, plan.params, config)
        except SimulationError as exc:
            entries.append(SweepEntry(m=m, ok=False, error=str(exc)))
            continue
        final = result.final_state
        res0 = diagnostics.complementarity_residual(
            final, plan.grid, plan.params, reaction_extra=0, phi_fields=phi_fields)
        res1 = diagnostics.complementarity_residual(
            final, plan.grid, plan.params, reaction_extra=1, phi_fields=phi_fields)
        entries.append(SweepEntry(
            m=m, ok=True,
            hs_defect=diagnostics.hele_shaw_defect(final, plan.grid),
            comp_residual=tuple(res0), comp_residual_extra=tuple(res1),
            p_final=final.p.copy(), result=result))

    ok_entries = [e for e in entries if e.ok]
    distances = [compare_fields(a.p_final, b.p_final, "L2", plan.grid.cell_volume)
                 for a, b in zip(ok_entries, ok_entries[1:])]

    defects = [e.hs_defect for e in ok_entries]
    verdicts = {"all_runs_ok": len(ok_entries) == len(entries)}
    if defects:
        bar = plan.hs_tol if plan.hs_tol is not None else defects[0] / 10.0
        verdicts["defect_decreasing"] = _nonincreasing(defects, allowed_increases=1)
        verdicts["defect_final_ok"] = defects[-1] <= bar
    if distances:
        verdicts["distances_decreasing"] = _nonincreasing(distances)
    return SweepReport(entries=entries, distances=distances, verdicts=verdicts)


def write_sweep_csv(path, report):
    n_res = max((len(e.comp_residual) for e in report.entries), default=0)
    cols = ["m", "ok", "hs_defect"]
    cols += [f"comp_residual_{i}" for i in range(n_res)]
    cols += [f"comp_residual_extra_{i}" for i in range(n_res)]
    cols.append("distance_to_next")
    lines = ["# exponent sweep metrics", ",".join(cols)]
    ok_entries = [e for e in report.entries if e.ok]
    dist_after = {e.m: d for e, d in zip(ok_entries, report.distances)}
    for e in report.entries:
        row = [repr(float(e.m)), "1" if e.ok else "0", repr(float(e.hs_defect))]
        res = list(e.comp_residual) + [float("nan")] * (n_res - len(e.comp_residual))
        row += [repr(float(v)) for v in res]
        res1 = list(e.comp_residual_extra) + [float("nan")] * (n_res - len(e.comp_residual_extra))
        row += [repr(float(v)) for v in res1]
        row.append(repr(float(dist_after.get(e.m, float("nan")))))
        lines.append(",".join(row))
    for name, value in sorted(report.verdicts.items()):
        lines.append(f"# verdict {name} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
