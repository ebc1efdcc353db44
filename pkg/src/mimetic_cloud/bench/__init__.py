"""Benchmark runner reproducing the convergence, Darcy, advection and scaling studies."""
import json
from importlib import resources

from .config import Experiment, ExperimentConfig, config_from_dict, load_config
from .experiments import (RunResult, run_advection, run_convergence, run_darcy, run_experiment,
                          run_solver_scaling, run_truncation, write_outputs)
from .norms import ErrorRow, ErrorTable, SolutionNorms, error_norms, fit_rate


def load_expectations() -> dict:
    """Reference values for the benchmarks, keyed by experiment."""
    return json.loads(resources.files(__package__).joinpath("expectations.json").read_text())


__all__ = ["Experiment", "ExperimentConfig", "config_from_dict", "load_config", "RunResult",
           "run_advection", "run_convergence", "run_darcy", "run_experiment", "run_solver_scaling",
           "run_truncation", "write_outputs", "ErrorRow", "ErrorTable", "SolutionNorms",
           "error_norms", "fit_rate", "load_expectations"]
