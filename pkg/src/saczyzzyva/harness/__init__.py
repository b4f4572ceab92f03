"""Experiment harness: scenario files, runs, metrics and invariant checks."""

from .config import load_config, parse_config, sweep_configs
from .invariants import INVARIANTS, Violation, check_invariants
from .metrics import COLUMNS, RunMetrics, metrics_csv, run_metrics
from .runner import RunResult, run_many, run_scenario, run_suite

__all__ = [
    "COLUMNS",
    "INVARIANTS",
    "RunMetrics",
    "RunResult",
    "Violation",
    "check_invariants",
    "load_config",
    "metrics_csv",
    "parse_config",
    "run_many",
    "run_metrics",
    "run_scenario",
    "run_suite",
    "sweep_configs",
]
