"""Batch runner, acceptance suite and command line."""

from .acceptance import CRITERIA, CriterionResult, SuiteReport, verify_suite
from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .runner import CSV_COLUMNS, RunOutcome, run_experiment

__all__ = [
    "CRITERIA",
    "CSV_COLUMNS",
    "ConfigError",
    "CriterionResult",
    "ExperimentConfig",
    "RunOutcome",
    "SuiteReport",
    "dump_config",
    "load_config",
    "parse_config",
    "run_experiment",
    "verify_suite",
]
