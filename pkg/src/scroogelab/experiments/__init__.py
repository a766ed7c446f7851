"""Config-driven experiment campaigns, result tables and the CLI."""

from .config import ExperimentConfig, build_config, load_config, parse_config_text
from .results import ResultTable, emit_outputs, read_csv
from .runners import (
    ReferenceCache,
    replay_row,
    run_commuting_circuit,
    run_doped_clifford,
    run_experiment,
    run_ground_state,
    run_theorem_checks,
)

__all__ = [
    "ExperimentConfig",
    "ReferenceCache",
    "ResultTable",
    "build_config",
    "emit_outputs",
    "load_config",
    "parse_config_text",
    "read_csv",
    "replay_row",
    "run_commuting_circuit",
    "run_doped_clifford",
    "run_experiment",
    "run_ground_state",
    "run_theorem_checks",
]
