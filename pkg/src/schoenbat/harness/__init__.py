"""Experiment harness: configuration, experiments, CSV/JSON output and the CLI."""
from .config import ExperimentConfig, Experiment, parse_config
from .experiments import run_demo, run_error_sweep, run_experiment, run_speed_sweep, run_tail_bound, run_unbiasedness
from .records import ResultRecord, emit_csv, emit_json, read_csv

__all__ = [
    "Experiment",
    "ExperimentConfig",
    "ResultRecord",
    "emit_csv",
    "emit_json",
    "parse_config",
    "read_csv",
    "run_demo",
    "run_error_sweep",
    "run_experiment",
    "run_speed_sweep",
    "run_tail_bound",
    "run_unbiasedness",
]
