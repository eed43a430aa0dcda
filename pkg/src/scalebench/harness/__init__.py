"""Experiment control, configuration and result persistence."""

from scalebench.harness.config import CLOCKS, METHODS, ExperimentConfig
from scalebench.harness.persist import (
    LagSeries,
    SubexperimentResult,
    load_experiment,
    load_result,
    parse_lag_csv,
    persist_result,
    write_manifest,
)
from scalebench.harness.runner import cell_parameters, run_experiment, run_subexperiment, workload_point

__all__ = [
    "CLOCKS",
    "METHODS",
    "ExperimentConfig",
    "LagSeries",
    "SubexperimentResult",
    "cell_parameters",
    "load_experiment",
    "load_result",
    "parse_lag_csv",
    "persist_result",
    "run_experiment",
    "run_subexperiment",
    "workload_point",
    "write_manifest",
]
