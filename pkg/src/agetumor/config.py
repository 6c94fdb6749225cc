"""Run configuration: YAML parsing with strict key validation, parameter
construction from presets or tabulated samples, and initial-data
construction."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from . import grid as gridmod
from .errors import ConfigError
from .params import ParameterSet, default_parameters
from .stepper import DEFAULT_TOLERANCES, SimConfig

_GRID_KEYS = {"d", "N_theta", "Theta_max", "N_x", "L"}
_PARAM_KEYS = {"preset", "p_M", "r_max", "nu_max", "mu0", "V0", "k",
               "theta_div", "w", "r_table", "mu_table", "V_table",
               "nu_theta_table", "nu_p_table"}
_INITIAL_KEYS = {"theta_in", "R0", "fraction", "perturb", "shoulder"}
_SIM_KEYS = {"m", "m_values", "T", "cfl_factor", "output_every",
             "reaction_extra", "seed", "tolerances", "output_dir",
             "front_threshold"}


@dataclass(frozen=True)
class RunSpec:
    """Validated configuration; ``echo`` is the normalized dict that gets
    embedded in snapshots (output paths stripped)."""

    d: int
    N_theta: int
    Theta_max: float
    N_x: int
    L: float
    preset: str
    param_scalars: dict
    param_tables: dict
    theta_in: float
    R0: float
    fraction: float
    perturb: float
    shoulder: float
    m: Optional[float]
    m_values: Optional[tuple]
    T: float
    cfl_factor: float
    output_every: int
    reaction_extra: int
    seed: int
    tolerances: dict
    output_dir: Optional[str]
    front_threshold: float
    echo: dict


def _require_block(data, name):
    block = data.get(name)
    if not isinstance(block, dict):
        raise ConfigError(f"config must contain a '{name}' mapping block")
    return block


def _reject_unknown(block, known, name):
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}' block: {sorted(unknown)}")


def _number(block, name, key, default=None, kind=float):
    if key not in block:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in '{name}' block")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}.{key}' must be a number, got {value!r}")
    return kind(value)


def _table(block, name, key):
    raw = block.get(key)
    if raw is None:
        return None
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}.{key}' must be a list of [x, y] pairs")
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ConfigError(f"'{name}.{key}' must hold at least two [x, y] pairs")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ConfigError(f"'{name}.{key}' sample points must be strictly increasing")
    return arr


def parse_config(text):
    """Parse and validate a YAML config; every malformed input raises
    ConfigError with the offending key path."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    return parse_config_dict(data)


def parse_config_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of blocks")
    _reject_unknown(data, {"grid", "params", "initial", "sim"}, "top level")

    g = _require_block(data, "grid")
    _reject_unknown(g, _GRID_KEYS, "grid")
    d = _number(g, "grid", "d", kind=int)
    N_theta = _number(g, "grid", "N_theta", kind=int)
    Theta_max = _number(g, "grid", "Theta_max")
    N_x = _number(g, "grid", "N_x", kind=int)
    L = _number(g, "grid", "L")

    p = _require_block(data, "params")
    _reject_unknown(p, _PARAM_KEYS, "params")
    preset = p.get("preset", "case1")
    if preset not in ("case1", "case2", "general"):
        raise ConfigError(f"unknown preset {preset!r} in 'params' block")
    scalars = {
        "p_M": _number(p, "params", "p_M", 1.0),
        "r_max": _number(p, "params", "r_max", 1.0),
        "nu_max": _number(p, "params", "nu_max", 120.0),
        "mu0": _number(p, "params", "mu0", 0.02),
        "V0": _number(p, "params", "V0", 1.0),
        "k": _number(p, "params", "k", 1.0),
        "theta_div": _number(p, "params", "theta_div", 0.04),
        "w": _number(p, "params", "w", 0.02),
    }
    tables = {}
    for key in ("r_table", "mu_table", "V_table", "nu_theta_table", "nu_p_table"):
        tab = _table(p, "params", key)
        if tab is not None:
            tables[key] = tab

    ini = _require_block(data, "initial")
    _reject_unknown(ini, _INITIAL_KEYS, "initial")
    theta_in = _number(ini, "initial", "theta_in", 0.3)
    R0 = _number(ini, "initial", "R0", 2.0)
    fraction = _number(ini, "initial", "fraction", 0.9)
    perturb = _number(ini, "initial", "perturb", 0.0)
    shoulder = _number(ini, "initial", "shoulder", 0.3)
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"'initial.fraction' must lie in [0, 1], got {fraction}")
    if theta_in <= 0 or R0 <= 0:
        raise ConfigError("'initial.theta_in' and 'initial.R0' must be positive")
    if perturb < 0 or perturb >= 1:
        raise ConfigError("'initial.perturb' must lie in [0, 1)")
    if not 0 < shoulder <= R0:
        raise ConfigError("'initial.shoulder' must lie in (0, R0]")

    s = _require_block(data, "sim")
    _reject_unknown(s, _SIM_KEYS, "sim")
    if "m" in s and "m_values" in s:
        raise ConfigError("'sim' block must set either 'm' or 'm_values', not both")
    m = _number(s, "sim", "m") if "m" in s else None
    m_values = None
    if "m_values" in s:
        raw = s["m_values"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("'sim.m_values' must be a nonempty list of numbers")
        m_values = tuple(float(v) for v in raw)
    if m is None and m_values is None:
        raise ConfigError("'sim' block must set 'm' or 'm_values'")
    for mv in ([m] if m is not None else list(m_values)):
        if not mv > 2:
            raise ConfigError(f"pressure exponent m must exceed 2, got {mv}")
    T = _number(s, "sim", "T")
    cfl_factor = _number(s, "sim", "cfl_factor", 0.9)
    if not 0.0 < cfl_factor <= 1.0:
        raise ConfigError(f"'sim.cfl_factor' must lie in (0, 1], got {cfl_factor}")
    output_every = _number(s, "sim", "output_every", 0, kind=int)
    reaction_extra = _number(s, "sim", "reaction_extra", 0, kind=int)
    if reaction_extra not in (0, 1):
        raise ConfigError("'sim.reaction_extra' must be 0 or 1")
    seed = _number(s, "sim", "seed", 0, kind=int)
    front_threshold = _number(s, "sim", "front_threshold", 1e-3)
    tolerances = s.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("'sim.tolerances' must be a mapping")
    _reject_unknown(tolerances, set(DEFAULT_TOLERANCES), "sim.tolerances")
    output_dir = s.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("'sim.output_dir' must be a string path")

    echo = copy.deepcopy(data)
    echo.get("sim", {}).pop("output_dir", None)

    return RunSpec(d=d, N_theta=N_theta, Theta_max=Theta_max, N_x=N_x, L=L,
                   preset=preset, param_scalars=scalars,
                   param_tables={k: v.tolist() for k, v in tables.items()},
                   theta_in=theta_in, R0=R0, fraction=fraction, perturb=perturb,
                   shoulder=shoulder, m=m, m_values=m_values, T=T, cfl_factor=cfl_factor,
                   output_every=output_every, reaction_extra=reaction_extra,
                   seed=seed, tolerances=dict(tolerances),
                   output_dir=output_dir, front_threshold=front_threshold,
                   echo=echo)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")


def _interp_fn(table):
    xs = np.asarray([row[0] for row in table], dtype=float)
    ys = np.asarray([row[1] for row in table], dtype=float)

    def fn(q):
        return np.interp(np.asarray(q, dtype=float), xs, ys)
    return fn, xs, ys


def _piecewise_slope_fn(table):
    xs = np.asarray([row[0] for row in table], dtype=float)
    ys = np.asarray([row[1] for row in table], dtype=float)
    slopes = np.diff(ys) / np.diff(xs)

    def fn(q):
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        # constant extrapolation of V outside the table: zero slope
        return np.where((q < xs[0]) | (q >= xs[-1]), 0.0, out)
    return fn


def make_params(spec):
    """Preset family, with any tabulated functions (monotone-preserving
    linear interpolation) overriding the corresponding preset function."""
    base = default_parameters(spec.preset, **spec.param_scalars)
    if not spec.param_tables:
        return base
    r, nu, mu, V, V_prime = base.r, base.nu, base.mu, base.V, base.V_prime
    r_max, mu_max, V0 = base.r_max, base.mu_max, base.V0
    tables = spec.param_tables
    if "r_table" in tables:
        r, _, ys = _interp_fn(tables["r_table"])
        r_max = float(np.max(ys))
    if "mu_table" in tables:
        mu, _, ys = _interp_fn(tables["mu_table"])
        mu_max = float(np.max(ys))
    if "V_table" in tables:
        V, _, ys = _interp_fn(tables["V_table"])
        V_prime = _piecewise_slope_fn(tables["V_table"])
        V0 = float(ys[0])
    if "nu_theta_table" in tables or "nu_p_table" in tables:
        if "nu_theta_table" not in tables or "nu_p_table" not in tables:
            raise ConfigError(
                "tabulated division rates need both 'nu_theta_table' and 'nu_p_table'")
        s_fn, _, _ = _interp_fn(tables["nu_theta_table"])
        g_fn, _, _ = _interp_fn(tables["nu_p_table"])

        def nu(theta, p):
            return s_fn(theta) * g_fn(p)
    return ParameterSet(p_M=base.p_M, r_max=r_max, mu_max=mu_max, V0=V0,
                        r=r, nu=nu, mu=mu, V=V, V_prime=V_prime,
                        theta_div=base.theta_div)


def make_grid(spec):
    return gridmod.Grid.make(spec.d, spec.N_theta, spec.Theta_max, spec.N_x, spec.L)


def make_sim_config(spec, m=None):
    m_run = m if m is not None else spec.m
    if m_run is None:
        raise ConfigError("this command needs a single 'sim.m' exponent")
    return SimConfig(m=float(m_run), T=spec.T, cfl_factor=spec.cfl_factor,
                     invariant_tolerances=dict(spec.tolerances),
                     output_every=spec.output_every,
                     reaction_extra=spec.reaction_extra,
                     front_threshold=spec.front_threshold)


def validate_domain(spec, grid, params):
    """Cross-block checks mirroring the run preconditions."""
    dtheta = grid.dtheta
    needed = spec.theta_in + params.r_max * spec.T + dtheta
    if grid.Theta_max < needed:
        raise ConfigError(
            f"Theta_max = {grid.Theta_max} cannot contain the age support: need "
            f"theta_in + r_max*T + dtheta = {needed:.6g}")
    if spec.R0 >= spec.L / 2.0:
        raise ConfigError(
            f"initial radius R0 = {spec.R0} must stay below L/2 = {spec.L / 2.0}")


def _bump_profile(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def _plateau_profile(r, R0, shoulder):
    # C^1 bump: 1 inside R0 - shoulder, smooth drop to 0 at R0
    u = np.clip((R0 - np.asarray(r, dtype=float)) / shoulder, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def build_initial(spec, grid=None, params=None):
    """Separable compact bump, scaled so the peak initial density is
    ``fraction`` of the admissible bound of the smallest run exponent.

    The spatial profile is a plateau with a smooth shoulder of the
    configured width: a steep stiff-pressure run then spends next to no
    time inflating the initial profile before the front starts moving.
    Deterministic given the spec; the optional multiplicative
    perturbation draws from a generator seeded with sim.seed.
    """
    if grid is None:
        grid = make_grid(spec)
    if params is None:
        params = make_params(spec)
    if spec.R0 >= spec.L / 2.0:
        raise ConfigError(
            f"initial radius R0 = {spec.R0} must stay below L/2 = {spec.L / 2.0}")
    if spec.theta_in >= grid.Theta_max:
        raise ConfigError("initial age support exceeds the age grid")
    bump_th = _bump_profile(grid.theta_centers / spec.theta_in)
    bump_x = _plateau_profile(grid.radius_field(), spec.R0, spec.shoulder)
    n = np.multiply.outer(bump_th, bump_x).reshape(grid.shape)
    if spec.perturb > 0.0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.uniform(-1.0, 1.0, size=grid.spatial_shape)
        n = n * (1.0 + spec.perturb * noise)
    m_ref = spec.m if spec.m is not None else min(spec.m_values)
    bound = gridmod.density_bound(m_ref, params.p_M)
    rho = np.tensordot(gridmod.density_weights(grid, params), n, axes=(0, 0))
    peak = float(rho.max())
    scale = spec.fraction * bound / peak if peak > 0.0 else 0.0
    return n * scale
