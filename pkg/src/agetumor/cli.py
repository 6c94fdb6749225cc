"""Command-line surface: run, sweep, diff, diagnose.

Exit codes: 0 success, 2 configuration/validation failure, 3 numerics
fault, 4 fatal invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as configmod
from . import diagnostics
from . import grid as gridmod
from . import snapshot as snapmod
from . import sweep as sweepmod
from .errors import ConfigError, SimulationError
from .stepper import run


def _out_dir(spec, override):
    out = override or spec.output_dir or "out"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args):
    spec = configmod.load_config(args.config)
    grid = configmod.make_grid(spec)
    params = configmod.make_params(spec)
    configmod.validate_domain(spec, grid, params)
    config = configmod.make_sim_config(spec)
    out = _out_dir(spec, args.output_dir)
    config.checkpoint_path = out
    n0 = configmod.build_initial(spec, grid, params)
    result = run(n0, grid, params, config)
    diagnostics.write_records_csv(
        os.path.join(out, "diagnostics.csv"), result.records,
        config.reaction_extra)
    snapmod.save_snapshot(os.path.join(out, "final.snap"), grid,
                          result.final_state, step=result.steps,
                          config_echo=spec.echo)
    print(f"run finished: {result.steps} steps to t = {result.final_state.t:.6g}")
    print(f"diagnostics rows: {len(result.records)}; outputs in {out}")
    if result.violations:
        print(f"recorded {len(result.violations)} invariant violation(s):")
        for v in result.violations[:20]:
            print(f"  {v}")
    else:
        print("no invariant violations recorded")
    return 0


def cmd_sweep(args):
    spec = configmod.load_config(args.config)
    if spec.m_values is None:
        raise ConfigError("sweep needs 'sim.m_values' in the config")
    grid = configmod.make_grid(spec)
    params = configmod.make_params(spec)
    configmod.validate_domain(spec, grid, params)
    out = _out_dir(spec, args.output_dir)
    n0 = configmod.build_initial(spec, grid, params)
    plan = sweepmod.SweepPlan(
        m_values=spec.m_values, grid=grid, params=params, T=spec.T,
        initial_n=n0, cfl_factor=spec.cfl_factor,
        invariant_tolerances=dict(spec.tolerances),
        reaction_extra=spec.reaction_extra,
        front_threshold=spec.front_threshold)
    report = sweepmod.run_sweep(plan)
    sweepmod.write_sweep_csv(os.path.join(out, "sweep_metrics.csv"), report)
    for entry in report.entries:
        if entry.ok:
            snapmod.save_snapshot(
                os.path.join(out, f"final_m{entry.m:g}.snap"), grid,
                entry.result.final_state, step=entry.result.steps,
                config_echo=spec.echo)
            print(f"m = {entry.m:g}: hs_defect = {entry.hs_defect:.6g}")
        else:
            print(f"m = {entry.m:g}: FAILED ({entry.error})")
    for name, value in sorted(report.verdicts.items()):
        print(f"verdict {name}: {'pass' if value else 'FAIL'}")
    print(f"sweep outputs in {out}")
    return 0


def cmd_diff(args):
    a = snapmod.load_snapshot(args.snapshot_a)
    b = snapmod.load_snapshot(args.snapshot_b)
    if not a.grid.matches(b.grid):
        raise ConfigError("snapshots live on different grids")
    weight = a.grid.dtheta * a.grid.cell_volume
    print("field,norm,value")
    for norm in ("L1", "L2", "Linf"):
        value = sweepmod.compare_fields(a.n, b.n, norm, weight)
        print(f"n,{norm},{value!r}")
    print(f"# t: {a.t!r} vs {b.t!r}; m: {a.m!r} vs {b.m!r}")
    return 0


def cmd_diagnose(args):
    snap = snapmod.load_snapshot(args.snapshot)
    if snap.config_echo is None:
        raise ConfigError(
            "snapshot lacks an embedded config echo; cannot rebuild parameters")
    spec = configmod.parse_config_dict(snap.config_echo)
    params = configmod.make_params(spec)
    state = gridmod.make_state(snap.grid, params, snap.n, snap.m, t=snap.t)
    phi_fields = diagnostics.tabulate_test_functions(snap.grid)
    rec = diagnostics.compute_record(
        state, snap.grid, params, phi_fields=phi_fields,
        reaction_extra=spec.reaction_extra,
        front_threshold=spec.front_threshold,
        nu_sup=None)
    records = [rec]
    if args.out:
        diagnostics.write_records_csv(args.out, records, spec.reaction_extra)
        print(f"diagnostics written to {args.out}")
    else:
        print(",".join(diagnostics.csv_columns(len(rec.comp_residual))))
        print(diagnostics.record_row(rec))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="agetumor",
        description="age-structured, pressure-limited tumor growth simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the exponent sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_diff = sub.add_parser("diff", help="compare two snapshots")
    p_diff.add_argument("snapshot_a")
    p_diff.add_argument("snapshot_b")
    p_diff.set_defaults(func=cmd_diff)

    p_diag = sub.add_parser("diagnose",
                            help="recompute diagnostics from a snapshot")
    p_diag.add_argument("snapshot")
    p_diag.add_argument("--out", default=None)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
