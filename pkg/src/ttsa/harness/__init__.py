"""Experiment configuration, orchestration, property suite and CLI."""

from .config import ExperimentConfig, load_config, parse_config
from .experiment import RunReport, build_problem, generic_problem, rate_report, read_summary, run_experiment
from .properties import PropertyResult, run_property_suite

__all__ = [
    "ExperimentConfig", "PropertyResult", "RunReport", "build_problem", "generic_problem",
    "load_config", "parse_config", "rate_report", "read_summary", "run_experiment", "run_property_suite",
]
