"""Multi-level Parareal with per-level temporal averaging."""

from .core import (
    ConfigurationError,
    LevelSpec,
    LinearOperator,
    MethodConfig,
    NumericalError,
    ProblemSpec,
    Trajectory,
    modulation_rhs,
    validate_config,
)
from .parareal import PararealRun, cycle_plan, solve_multilevel, solve_two_level

__all__ = [
    "ConfigurationError",
    "LevelSpec",
    "LinearOperator",
    "MethodConfig",
    "NumericalError",
    "PararealRun",
    "ProblemSpec",
    "Trajectory",
    "cycle_plan",
    "modulation_rhs",
    "solve_multilevel",
    "solve_two_level",
    "validate_config",
]
