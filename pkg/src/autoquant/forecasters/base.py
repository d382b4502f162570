"""Registry of point forecasting methods behind one interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import CheckpointVersionError, FeatureMismatch, UnknownMethod
from ..forecast import PointForecast
from ..space import Dimension, HyperparamSpace, jsonable
from .gbt import GradientBoostedTrees
from .mlp import MLP
from .naive import SeasonalNaive
from .ridge import RidgeRegression

MODEL_VERSION = 1


@dataclass(frozen=True)
class ForecasterSpec:
    method: str
    space: HyperparamSpace
    estimator: type
    uses_features: bool = True


REGISTRY = {
    "seasonal_naive": ForecasterSpec(
        "seasonal_naive",
        HyperparamSpace((Dimension("period", "cat", choices=(24, 168), default=24),)),
        SeasonalNaive,
        uses_features=False,
    ),
    "ridge_arx": ForecasterSpec(
        "ridge_arx",
        HyperparamSpace((Dimension("alpha", "log", 1e-8, 1e2, default=1.0),)),
        RidgeRegression,
    ),
    "gbt": ForecasterSpec(
        "gbt",
        HyperparamSpace(
            (
                Dimension("learning_rate", "log", 0.01, 1.0, default=0.3),
                Dimension("max_depth", "int", 1, 18, default=6),
                Dimension("n_estimators", "int", 10, 300, default=100),
                Dimension("sub_sample", "real", 0.5, 1.0, default=1.0),
            )
        ),
        GradientBoostedTrees,
    ),
    "mlp": ForecasterSpec(
        "mlp",
        HyperparamSpace(
            (
                Dimension("activation", "cat", choices=("logistic", "tanh", "relu"), default="relu"),
                Dimension("batch_size", "cat", choices=(32, 64, 128), default=64),
                Dimension("hidden_layer_sizes", "int_tuple", 10, 100, default=(100,), min_len=1, max_len=3),
            )
        ),
        MLP,
    ),
}


def get_spec(method):
    try:
        return REGISTRY[method]
    except KeyError:
        raise UnknownMethod(method) from None


def config_space(method):
    return get_spec(method).space


def default_config(method):
    return config_space(method).defaults()


def _make_estimator(spec, config, seed):
    params = dict(config)
    if "random_state" in spec.estimator().get_params():
        params["random_state"] = int(seed)
    return spec.estimator(**params)


@dataclass
class PointModel:
    """A fitted point forecaster together with the inputs that produced it."""

    method: str
    config: dict
    seed: int
    estimator: object
    n_features: int | None = None
    meta: dict = field(default_factory=dict)

    def predict(self, windows):
        return predict(self, windows)

    def to_dict(self):
        return {
            "version": MODEL_VERSION,
            "method": self.method,
            "config": jsonable(self.config),
            "seed": int(self.seed),
            "n_features": self.n_features,
            "state": self.estimator.state_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MODEL_VERSION:
            raise CheckpointVersionError(f"model document version {d.get('version')} != {MODEL_VERSION}")
        spec = get_spec(d["method"])
        return cls(
            method=d["method"],
            config=spec.space.coerce(d["config"]),
            seed=d["seed"],
            estimator=spec.estimator.from_state(d["state"]),
            n_features=d["n_features"],
        )


def fit(method, config, windows, seed=0):
    """Train ``method`` with ``config`` on the training windows."""
    spec = get_spec(method)
    config = spec.space.coerce(spec.space.validate(dict(config)))
    if len(windows) == 0:
        raise ValueError("no training windows")
    est = _make_estimator(spec, config, seed)
    if spec.uses_features:
        X = windows.features
        est.fit(X, windows.targets)
        n_features = X.shape[1]
    else:
        est.fit(windows)
        n_features = None
    return PointModel(method, config, int(seed), est, n_features)


def predict(model, windows):
    spec = get_spec(model.method)
    if spec.uses_features:
        X = windows.features
        if X.shape[1] != model.n_features:
            raise FeatureMismatch(f"model expects {model.n_features} features, windows carry {X.shape[1]}")
        values = model.estimator.predict(X)
    else:
        values = model.estimator.predict(windows)
    values = np.asarray(values, dtype=float).reshape(len(windows), windows.H)
    return PointForecast(values=values, origins=windows.origins, origin_times=windows.origin_times)
