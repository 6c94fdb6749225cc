"""Fault taxonomy shared across the solver; classes map to CLI exit codes."""


class SimulationError(Exception):
    """Base class for every fault the solver raises on purpose."""

    exit_code = 1


class ConfigError(SimulationError):
    """Invalid configuration, parameters, or run preconditions."""

    exit_code = 2


class NumericsError(SimulationError):
    """Stability or discretization fault raised while stepping."""

    exit_code = 3


class DomainError(NumericsError):
    """A model function was evaluated outside its admissible domain."""


class InvariantError(SimulationError):
    """Fatal runtime invariant violation (negativity, NaN, boundary contact)."""

    exit_code = 4
