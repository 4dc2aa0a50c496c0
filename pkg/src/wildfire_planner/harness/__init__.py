"""Experiment orchestration, evaluation metrics and the command-line interface."""

from .experiment import (METHODS, PLANNERS, EvalReport, ExperimentConfig, InstanceRule,
                         build_saifi_instance, coverage_rate, evaluate_out_of_sample,
                         mean_interval_width, run_experiment, run_sweep)

__all__ = [
    "METHODS",
    "PLANNERS",
    "EvalReport",
    "ExperimentConfig",
    "InstanceRule",
    "build_saifi_instance",
    "coverage_rate",
    "evaluate_out_of_sample",
    "mean_interval_width",
    "run_experiment",
    "run_sweep",
]
