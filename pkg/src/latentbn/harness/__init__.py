"""Experiment driver: configs, runs, flat-file results, plots and reports."""

from .config import BudgetViolation, ConfigError, ExperimentConfig, budget_violations, load_config, parse_config
from .report import build_report, write_report
from .results import ResultRow, read_replicates, read_results, write_results
from .runner import bounds_table, fisher_summary, fit_results, simulate

__all__ = [
    "BudgetViolation", "ConfigError", "ExperimentConfig", "ResultRow", "bounds_table", "budget_violations",
    "build_report", "fisher_summary", "fit_results", "load_config", "parse_config", "read_replicates",
    "read_results", "simulate", "write_report", "write_results",
]
