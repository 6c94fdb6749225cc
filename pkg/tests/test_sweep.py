import numpy as np
import pytest

from agetumor.config import build_initial, make_grid, make_params, parse_config
from agetumor.errors import ConfigError
from agetumor.sweep import SweepPlan, compare_fields, run_sweep, write_sweep_csv

TINY_CFG = """
grid: {d: 1, N_theta: 12, Theta_max: 0.5, N_x: 24, L: 3.0}
params: {preset: case1, nu_max: 6.0, theta_div: 0.05, w: 0.025}
initial: {theta_in: 0.2, R0: 1.0, fraction: 0.8, shoulder: 0.4}
sim: {m_values: [4, 8], T: 0.05, cfl_factor: 0.9}
"""


def _tiny_plan(m_values=(4.0, 8.0), zero=False):
    spec = parse_config(TINY_CFG)
    grid = make_grid(spec)
    params = make_params(spec)
    n0 = np.zeros(grid.shape) if zero else build_initial(spec, grid, params)
    return SweepPlan(m_values=m_values, grid=grid, params=params, T=spec.T,
                     initial_n=n0, cfl_factor=0.9)


# -------------------------------------------------------------- compare_fields

def test_compare_fields_identical(rng):
    a = rng.uniform(size=(6, 6))
    for norm in ("L1", "L2", "Linf"):
        assert compare_fields(a, a, norm, 0.25) == 0.0


def test_compare_fields_constant_offset_unit_volume():
    # constant difference c on unit total volume: L1 equals |c|
    a = np.zeros(8)
    c = -0.37
    b = a + c
    assert abs(compare_fields(a, b, "L1", 1.0 / 8) - abs(c)) < 1e-15


def test_compare_fields_matches_dense_loop(rng):
    a = rng.uniform(size=12)
    b = rng.uniform(size=12)
    w = 0.3
    l1 = sum(abs(x - y) * w for x, y in zip(a, b))
    l2 = sum((x - y) ** 2 * w for x, y in zip(a, b)) ** 0.5
    linf = max(abs(x - y) for x, y in zip(a, b))
    assert abs(compare_fields(a, b, "L1", w) - l1) < 1e-13
    assert abs(compare_fields(a, b, "L2", w) - l2) < 1e-13
    assert abs(compare_fields(a, b, "Linf", w) - linf) < 1e-13


def test_compare_fields_faults():
    with pytest.raises(ConfigError):
        compare_fields(np.zeros(4), np.zeros(5), "L1", 1.0)
    with pytest.raises(ConfigError):
        compare_fields(np.zeros(4), np.zeros(4), "L4", 1.0)


# ------------------------------------------------------------------- run_sweep

def test_plan_validation():
    with pytest.raises(ConfigError):
        _tiny_plan(m_values=(2.0, 4.0))
    with pytest.raises(ConfigError):
        _tiny_plan(m_values=(8.0, 4.0))
    with pytest.raises(ConfigError):
        _tiny_plan(m_values=())


def test_single_exponent_report():
    report = run_sweep(_tiny_plan(m_values=(4.0,)))
    assert len(report.entries) == 1
    assert report.distances == []
    assert np.isfinite(report.entry(4.0).hs_defect)


def test_zero_data_sweep():
    report = run_sweep(_tiny_plan(zero=True))
    assert all(e.hs_defect == 0.0 for e in report.entries)
    assert all(d == 0.0 for d in report.distances)
    assert report.verdicts["defect_final_ok"]
    assert report.verdicts["defect_decreasing"]
    assert report.verdicts["distances_decreasing"]


def test_sweep_deterministic():
    r1 = run_sweep(_tiny_plan())
    r2 = run_sweep(_tiny_plan())
    for e1, e2 in zip(r1.entries, r2.entries):
        assert e1.hs_defect == e2.hs_defect
        assert e1.comp_residual == e2.comp_residual
        assert np.array_equal(e1.p_final, e2.p_final)
    assert r1.distances == r2.distances


def test_sweep_runs_independent():
    r_small = run_sweep(_tiny_plan(m_values=(4.0, 8.0)))
    r_big = run_sweep(_tiny_plan(m_values=(4.0, 8.0, 16.0)))
    for m in (4.0, 8.0):
        assert r_small.entry(m).hs_defect == r_big.entry(m).hs_defect
        assert np.array_equal(r_small.entry(m).p_final, r_big.entry(m).p_final)


def test_sweep_initial_bound_checked():
    plan = _tiny_plan()
    plan.initial_n = plan.initial_n * 10.0
    with pytest.raises(ConfigError, match="bound"):
        run_sweep(plan)


def test_sweep_reports_both_residual_variants():
    report = run_sweep(_tiny_plan(m_values=(4.0,)))
    entry = report.entry(4.0)
    assert len(entry.comp_residual) == len(entry.comp_residual_extra) == 3


def test_sweep_csv(tmp_path):
    report = run_sweep(_tiny_plan())
    path = tmp_path / "metrics.csv"
    write_sweep_csv(path, report)
    text = path.read_text()
    assert "hs_defect" in text.splitlines()[1]
    assert any(line.startswith("# verdict") for line in text.splitlines())
