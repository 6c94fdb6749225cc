"""Age-structured, pressure-limited tumor growth simulator with oracle
solvers, stiff-pressure-limit diagnostics, and an exponent-sweep harness."""

from .errors import (ConfigError, DomainError, InvariantError, NumericsError,
                     SimulationError)
from .grid import Grid, State, density_bound, integrate_density, make_state, \
    pressure_of_density, support_radii
from .params import ParameterSet, default_parameters, eval_F, \
    function_bounds, validate_assumptions
from .stepper import RunResult, SimConfig, run, step
from .sweep import SweepPlan, SweepReport, compare_fields, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "InvariantError", "NumericsError",
    "SimulationError", "Grid", "State", "density_bound", "integrate_density",
    "make_state", "pressure_of_density", "support_radii", "ParameterSet",
    "default_parameters", "eval_F", "function_bounds", "validate_assumptions",
    "RunResult", "SimConfig", "run", "step", "SweepPlan", "SweepReport",
    "compare_fields", "run_sweep",
]
