"""Batch sweeps, persistence and the acceptance regression table."""
from .config import KINDS, SweepConfig, load_config, parse_config
from .criteria import CRITERIA, CriterionResult, run_all, run_criterion
from .regress import format_table, regression_suite
from .runner import SweepResult, run_experiment, write_result

__all__ = [
    "KINDS",
    "SweepConfig",
    "load_config",
    "parse_config",
    "CRITERIA",
    "CriterionResult",
    "run_all",
    "run_criterion",
    "format_table",
    "regression_suite",
    "SweepResult",
    "run_experiment",
    "write_result",
]
