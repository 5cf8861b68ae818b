"""High-dimensional instrumental-variable estimation with double selection."""

from ._hdiv import (
    ConfigError,
    DegenerateStatisticError,
    InputError,
    WeakIdentificationError,
    __version__,
    cli,
    double_selection,
    fit_lasso,
    logit_elasticities,
    penalty_level,
    simulate_json,
    two_stage_least_squares,
)

__all__ = [
    "ConfigError",
    "DegenerateStatisticError",
    "InputError",
    "WeakIdentificationError",
    "cli",
    "double_selection",
    "fit_lasso",
    "logit_elasticities",
    "penalty_level",
    "simulate_json",
    "two_stage_least_squares",
]
