"""Python access to the artic streaming simulator."""

from ._artic import (
    ConfigError,
    InputError,
    InvariantError,
    budget_bytes,
    importance_from_distance,
    next_bitrate,
    pipeline_stats,
    qp_from_importance,
    run_scenario,
    scenario_keys,
    version,
)

__version__ = version()

__all__ = [
    "ConfigError",
    "InputError",
    "InvariantError",
    "budget_bytes",
    "importance_from_distance",
    "next_bitrate",
    "pipeline_stats",
    "qp_from_importance",
    "run_scenario",
    "scenario_keys",
    "version",
]
