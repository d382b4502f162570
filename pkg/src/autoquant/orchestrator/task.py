"""Evaluation tasks seen by the schedulers.

A task knows how to fit a point model for ``(method, config)`` and how to
score a fitted handle for a sampling std. Declared costs drive the
simulated clock; the wall clock measures real durations instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .. import forecasters
from ..cinn import DEFAULT_LEVELS, SamplingConfig, quantiles_from_point
from ..exceptions import ConfigError, UnknownMethod
from ..metrics import config_hash, crps_dataset
from ..space import Dimension, HyperparamSpace, jsonable


class Task:
    """Interface shared by :class:`ForecastTask` and :class:`SyntheticLandscape`."""

    methods: tuple = ()

    def space(self, method):
        raise NotImplementedError

    def default_config(self, method):
        return self.space(method).defaults()

    def fit(self, method, config, seed):
        raise NotImplementedError

    def score(self, handle, sigma):
        raise NotImplementedError

    def test_score(self, handle, sigma):
        return None

    def fit_cost(self, method, config):
        return 1.0

    def sample_cost(self, method):
        return 0.05

    def check_method(self, method):
        if method not in self.methods:
            raise UnknownMethod(method)


@dataclass
class FitHandle:
    method: str
    config: dict
    seed: int
    model: object = None
    val_pf: object = None
    test_pf: object = None


def default_cost(method, config):
    """Simulated training seconds, roughly proportional to model size."""
    if method == "seasonal_naive":
        return 0.5
    if method == "ridge_arx":
        return 2.0
    if method == "gbt":
        return 0.05 * config["n_estimators"] * (1 + config["max_depth"] / 6) * (0.5 + config["sub_sample"] / 2)
    if method == "mlp":
        return 2.0 + 0.05 * sum(config["hidden_layer_sizes"]) * 64 / config["batch_size"]
    return 1.0


class ForecastTask(Task):
    """Point forecasters on real windows, scored through a shared trained flow.

    The flow is fitted once and reused for every forecaster; sampling uses
    the same seed for every evaluation so that scores are a smooth function
    of ``sigma`` (common random numbers).
    """

    def __init__(self, train, val, test, cinn, methods=None, M=100, levels=DEFAULT_LEVELS, seed=0, cost=default_cost):
        self.train, self.val, self.test = train, val, test
        self.cinn = cinn
        self.methods = tuple(methods or forecasters.REGISTRY)
        for m in self.methods:
            forecasters.get_spec(m)
        self.M, self.levels, self.seed = int(M), tuple(levels), int(seed)
        self.cost = cost
        self._val_cond = val.conditions
        self._test_cond = test.conditions if test is not None and len(test) else None
        self.n_fits = 0

    def space(self, method):
        self.check_method(method)
        return forecasters.config_space(method)

    def fit(self, method, config, seed):
        self.check_method(method)
        model = forecasters.fit(method, config, self.train, seed)
        self.n_fits += 1
        h = FitHandle(method, model.config, int(seed), model)
        h.val_pf = model.predict(self.val)
        return h

    def quantiles(self, handle, sigma, split="val"):
        if split == "val":
            pf, cond = handle.val_pf, self._val_cond
        else:
            if handle.test_pf is None:
                handle.test_pf = handle.model.predict(self.test)
            pf, cond = handle.test_pf, self._test_cond
        return quantiles_from_point(self.cinn, pf, cond, SamplingConfig(float(sigma), self.M, self.levels), self.seed)

    def score(self, handle, sigma):
        return crps_dataset(self.quantiles(handle, sigma), self.val.targets).value

    def test_score(self, handle, sigma):
        if self._test_cond is None:
            return None
        return crps_dataset(self.quantiles(handle, sigma, "test"), self.test.targets).value

    def fit_cost(self, method, config):
        return float(self.cost(method, config))

    def sample_cost(self, method):
        return 0.1

    def save_handle(self, handle, directory):
        path = directory / f"{handle.method}-{config_hash(jsonable(handle.config))}.json"
        with open(path, "w") as fh:
            json.dump(handle.model.to_dict(), fh)
        return path


class SyntheticLandscape(Task):
    """Analytic objectives ``Q(method, config, sigma)`` for scheduler tests.

    Parameters
    ----------
    objectives : dict
        ``method -> callable(config, sigma) -> float``.
    spaces : dict, optional
        ``method -> HyperparamSpace``; defaults to one real dimension ``x``
        in ``[0, 1]``.
    fit_costs : dict or callable, optional
        Simulated fit seconds per method (or ``callable(method, config)``).
    """

    def __init__(self, objectives, spaces=None, fit_costs=None, sample_cost=0.05, test_objectives=None):
        self.objectives = dict(objectives)
        self.methods = tuple(self.objectives)
        default_space = HyperparamSpace((Dimension("x", "real", 0.0, 1.0, default=0.5),))
        self.spaces = {m: (spaces or {}).get(m, default_space) for m in self.methods}
        self.fit_costs = fit_costs
        self._sample_cost = float(sample_cost)
        self.test_objectives = test_objectives
        self.n_fits = 0

    def space(self, method):
        self.check_method(method)
        return self.spaces[method]

    def fit(self, method, config, seed):
        self.check_method(method)
        self.n_fits += 1
        return FitHandle(method, dict(config), int(seed))

    def score(self, handle, sigma):
        return float(self.objectives[handle.method](handle.config, float(sigma)))

    def test_score(self, handle, sigma):
        if self.test_objectives is None:
            return self.score(handle, sigma)
        return float(self.test_objectives[handle.method](handle.config, float(sigma)))

    def fit_cost(self, method, config):
        if callable(self.fit_costs):
            return float(self.fit_costs(method, config))
        if isinstance(self.fit_costs, dict):
            return float(self.fit_costs[method])
        return 1.0

    def sample_cost(self, method):
        return self._sample_cost


def quadratic_sigma(a=0.2, b=0.25, sigma0=0.5):
    """``Q = a + b (ln sigma - ln sigma0)^2``; minimum ``a`` at ``sigma0``."""
    l0 = math.log(sigma0)

    def f(config, sigma):
        return a + b * (math.log(sigma) - l0) ** 2

    return f


def constant_landscape(values, fit_cost=1.0, sample_cost=0.05):
    return SyntheticLandscape(
        {m: (lambda c, s, v=float(v): v) for m, v in values.items()},
        fit_costs={m: fit_cost for m in values},
        sample_cost=sample_cost,
    )


def dominance_landscape(n_methods=9, winner=0, sigma0=0.5, seed=0, fit_cost=1.0):
    """Method ``winner`` beats every other method at every configuration and sigma.

    Each method scores ``offset + 0.2 * (x - x0)^2 + 0.05 * (ln sigma - ln sigma0)^2``
    with the winner's offset 0.1 and all other offsets at least 0.5, so the
    winner's worst value (below 0.5) never exceeds any other method's best.
    """
    rng = np.random.default_rng(seed)
    offsets = 0.5 + rng.uniform(0, 0.5, size=n_methods)
    offsets[winner] = 0.1
    x0 = rng.uniform(0, 1, size=n_methods)
    names = [f"m{i}" for i in range(n_methods)]
    l0 = math.log(sigma0)
    # worst-case sigma term: (ln 3 - ln 0.01)^2 * 0.05 < 1.7, scale it into [0, 0.05]
    span = max(abs(math.log(3.0) - l0), abs(math.log(0.01) - l0)) ** 2

    def make(i):
        def f(config, sigma):
            return offsets[i] + 0.2 * (config["x"] - x0[i]) ** 2 + 0.05 * (math.log(sigma) - l0) ** 2 / span

        return f

    return SyntheticLandscape({n: make(i) for i, n in enumerate(names)}, fit_costs={n: fit_cost for n in names})


def check_budget(B_t):
    if not (isinstance(B_t, (int, float)) and B_t > 0 and math.isfinite(B_t)):
        raise ConfigError(f"time budget must be positive, got {B_t}")
