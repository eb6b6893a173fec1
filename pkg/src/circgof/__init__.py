"""Goodness-of-fit tests for parametric regression models with a circular response."""

from .circular import VonMisesParams, a1inv, circ_dist, mean_direction, resultant_length, wrap
from .dataset import BoundaryWeight, Dataset, EvalGrid, load_csv, make_grid, save_csv
from .param_fit import FitConfig, ParametricModel, fit_circular_ls, predict
from .nonparam import BandwidthSpec, estimate_m, select_bandwidth_case, smooth_parametric
from .gof import TestConfig, statistic_t1, statistic_t2
from .bootstrap import BootstrapScheme, calibrate, run_iid_bootstrap, run_spatial_bootstrap
from .spatial import ExponentialCovariance, SpatialFitConfig, SpatialModel, mh_fit, simulate_field
from .harness import Scenario, generate_dataset, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BandwidthSpec", "BootstrapScheme", "BoundaryWeight", "Dataset", "EvalGrid",
    "ExponentialCovariance", "FitConfig", "calibrate", "ParametricModel", "Scenario", "SpatialFitConfig",
    "SpatialModel", "TestConfig", "VonMisesParams", "a1inv", "circ_dist", "estimate_m",
    "fit_circular_ls", "generate_dataset", "load_csv", "make_grid", "mean_direction", "mh_fit",
    "predict", "resultant_length", "run_experiment", "run_iid_bootstrap", "run_spatial_bootstrap",
    "save_csv", "select_bandwidth_case", "simulate_field", "smooth_parametric", "statistic_t1",
    "statistic_t2", "wrap",
]
