from .base import (
    REGISTRY,
    ForecasterSpec,
    PointModel,
    config_space,
    default_config,
    fit,
    get_spec,
    predict,
)
from .gbt import GradientBoostedTrees
from .mlp import MLP
from .naive import SeasonalNaive
from .ridge import RidgeRegression

__all__ = [
    "REGISTRY",
    "ForecasterSpec",
    "PointModel",
    "config_space",
    "default_config",
    "fit",
    "get_spec",
    "predict",
    "GradientBoostedTrees",
    "MLP",
    "SeasonalNaive",
    "RidgeRegression",
]
