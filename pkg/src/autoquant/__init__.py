"""Quantile forecasts from arbitrary point forecasters through a conditional
invertible network, with automated method and hyperparameter selection."""

from .cinn import CINN, CinnModel, SamplingConfig, init_cinn, quantiles_from_point, train_cinn
from .data import FeatureSpec, TimeSeriesDataset, build_windows, load_csv, make_splits, split_dataset
from .forecast import PointForecast, QuantileForecast
from .metrics import crps_dataset, crps_energy, crps_integral, crps_quantiles, pinball
from .orchestrator import AutoPQ, autopq_default, joint_optimize, successive_halving
from .resources import ResourceLedger, energy_kwh, monetary_cost
from .synthetic import SyntheticSpec, generate, oracle_crps

__version__ = "0.1.0"

__all__ = [
    "AutoPQ",
    "CINN",
    "CinnModel",
    "FeatureSpec",
    "PointForecast",
    "QuantileForecast",
    "ResourceLedger",
    "SamplingConfig",
    "SyntheticSpec",
    "TimeSeriesDataset",
    "autopq_default",
    "build_windows",
    "crps_dataset",
    "crps_energy",
    "crps_integral",
    "crps_quantiles",
    "energy_kwh",
    "generate",
    "init_cinn",
    "joint_optimize",
    "load_csv",
    "make_splits",
    "monetary_cost",
    "oracle_crps",
    "pinball",
    "quantiles_from_point",
    "split_dataset",
    "successive_halving",
    "train_cinn",
]
