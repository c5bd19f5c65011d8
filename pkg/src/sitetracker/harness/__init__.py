"""Metrics, run configuration, experiment runners and the command line."""

from .config import ExperimentConfig, LearningConfig, RunConfig, load_config, parse_config
from .experiments import ExperimentResult, run_experiment, run_suite
from .metrics import (ErrorCdf, MetricsReport, compute_rmse, count_id_swaps, error_cdf,
                      evaluate, matched_errors)

__all__ = ["ErrorCdf", "ExperimentConfig", "ExperimentResult", "LearningConfig",
           "MetricsReport", "RunConfig", "compute_rmse", "count_id_swaps", "error_cdf",
           "evaluate", "load_config", "matched_errors", "parse_config", "run_experiment",
           "run_suite"]
