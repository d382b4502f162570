"""End-to-end pipeline: data preparation, flow training and the AutoPQ estimator."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator

from ..cinn import DEFAULT_LEVELS, SamplingConfig, fit_encoder, init_cinn, quantiles_from_point, train_cinn
from ..data import FeatureSpec, build_windows, fit_normalizer, make_splits
from ..exceptions import ConfigError, UntrainedModel
from ..forecast import QuantileForecast
from ..forecasters import REGISTRY
from ..resources import ResourceLedger
from .halving import ResultStore, autopq_default, successive_halving, warm_start_store
from .task import ForecastTask

MODES = ("default", "advanced", "ablation")


@dataclass
class Prepared:
    """Normalised dataset with its window sets."""

    dataset: object
    normalizer: object
    train: object
    val: object
    test: object
    spec: FeatureSpec = field(default_factory=FeatureSpec)


def prepare(ds, H1=24, H=24, feature_spec=None, normalize=True):
    """Z-score the dataset on its training split and build train/val/test windows."""
    spec = feature_spec or FeatureSpec()
    norm = fit_normalizer(ds) if normalize else None
    nds = norm.apply(ds) if norm is not None else ds
    train, val, test = make_splits(nds, H1, H, spec)
    if not len(train) or not len(val):
        raise ConfigError("training and validation splits must each contain at least one window")
    return Prepared(nds, norm, train, val, test, spec)


def train_flow(windows, n_blocks=8, hidden=32, cond_dim=16, alpha=2.0, epochs=100, batch_size=64, lr=1e-3, momentum=0.9, clip_norm=5.0, seed=0):
    """Fit the flow on training windows; the condition encoder is a whitened PCA of the features."""
    R = windows.conditions
    C = min(int(cond_dim), R.shape[1])
    model = init_cinn(windows.H, C, n_blocks, hidden, alpha, seed, raw_dim=R.shape[1])
    model = fit_encoder(model, R)
    model, _ = train_cinn(model, windows.targets, R, epochs, batch_size, lr, momentum, clip_norm, seed)
    model.trained = True
    return model


class AutoPQ(BaseEstimator):
    """Automated quantile forecasting from point forecasters.

    ``fit`` prepares the data, trains the flow once and then selects a
    point forecasting method, its hyperparameters and the sampling std,
    either from default configurations (``mode='default'``) or by
    successive halving over joint searches (``'advanced'``, or
    ``'ablation'`` for the single-level search).

    Parameters
    ----------
    methods : sequence of str, optional
        Registered method names; all of them by default.
    B_t : float
        Time budget per halving round, in seconds of the chosen clock.
    B_i : int
        Inner sampling-std search budget (evaluations).
    warm_start : bool
        In advanced mode, seed halving with a default run and prune once.
    clock : {'sim', 'wall'}
    flow_params : dict, optional
        Passed to :func:`train_flow`.

    Attributes
    ----------
    outcome_ : CashOutcome
    store_ : ResultStore
    task_ : ForecastTask
    cinn_ : CinnModel
    ledger_ : ResourceLedger
    """

    def __init__(
        self,
        methods=None,
        mode="default",
        B_t=600.0,
        B_i=30,
        workers=1,
        H=24,
        H1=24,
        M=100,
        levels=DEFAULT_LEVELS,
        warm_start=True,
        total_budget_mode=False,
        clock="sim",
        feature_spec=None,
        flow_params=None,
        random_state=0,
    ):
        self.methods = methods
        self.mode = mode
        self.B_t = B_t
        self.B_i = B_i
        self.workers = workers
        self.H = H
        self.H1 = H1
        self.M = M
        self.levels = levels
        self.warm_start = warm_start
        self.total_budget_mode = total_budget_mode
        self.clock = clock
        self.feature_spec = feature_spec
        self.flow_params = flow_params
        self.random_state = random_state

    def _validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        methods = list(self.methods or REGISTRY)
        for m in methods:
            if m not in REGISTRY:
                raise ConfigError(f"unknown method {m!r}")
        if not methods:
            raise ConfigError("need at least one method")
        return methods

    def fit(self, dataset, checkpoint_dir=None):
        methods = self._validate()
        seed = int(self.random_state)
        ledger = ResourceLedger()
        t0 = time.monotonic()
        self.prepared_ = prepare(dataset, self.H1, self.H, self.feature_spec)
        ledger.record("prepare", time.monotonic() - t0)
        t0 = time.monotonic()
        self.cinn_ = train_flow(self.prepared_.train, seed=seed, **(self.flow_params or {}))
        ledger.record("cinn", time.monotonic() - t0)
        p = self.prepared_
        self.task_ = ForecastTask(p.train, p.val, p.test, self.cinn_, methods, self.M, self.levels, seed)
        t0 = time.monotonic()
        if self.mode == "default":
            self.outcome_, self.store_ = autopq_default(self.task_, methods, self.B_i, seed, checkpoint_dir, clock=self.clock)
        else:
            store = ResultStore(methods, seed, "advanced", self.mode == "ablation")
            if self.mode == "advanced" and self.warm_start:
                _, default_store = autopq_default(self.task_, methods, self.B_i, seed, None, score_test=False, clock=self.clock)
                store = warm_start_store(default_store, self.task_)
            self.outcome_ = successive_halving(
                self.task_,
                methods,
                self.B_t,
                self.B_i,
                self.workers,
                seed,
                self.clock,
                store=store,
                checkpoint_dir=checkpoint_dir,
                total_budget_mode=self.total_budget_mode,
                ablation=self.mode == "ablation",
            )
            self.store_ = store
        ledger.record("search", time.monotonic() - t0)
        self.handle_ = self.outcome_.handle
        self.ledger_ = ledger
        return self

    def _check(self):
        if not hasattr(self, "outcome_"):
            raise UntrainedModel("call fit first")

    def predict_quantiles(self, split="test", raw_units=True):
        """Quantile forecast on the ``'val'`` or ``'test'`` windows of the fitted dataset."""
        self._check()
        qf = self.task_.quantiles(self.handle_, self.outcome_.sigma, split)
        return self._denormalize(qf) if raw_units else qf

    def predict(self, dataset, raw_units=True):
        """Quantile forecasts for every day-ahead origin of a new dataset with the same columns."""
        self._check()
        nds = self.prepared_.normalizer.apply(dataset) if self.prepared_.normalizer is not None else dataset
        windows = build_windows(nds, self.H1, self.H, self.prepared_.spec)
        pf = self.handle_.model.predict(windows)
        sc = SamplingConfig(float(self.outcome_.sigma), int(self.M), tuple(self.levels))
        qf = quantiles_from_point(self.cinn_, pf, windows.conditions, sc, int(self.random_state))
        return self._denormalize(qf) if raw_units else qf

    def _denormalize(self, qf):
        norm = self.prepared_.normalizer
        if norm is None:
            return qf
        samples = None if qf.samples is None else norm.invert(qf.samples)
        return QuantileForecast(norm.invert(qf.values), qf.levels, qf.origins, qf.origin_times, samples)

    def score(self, split="test"):
        """Mean CRPS (normalised units) of the selected pipeline on a split."""
        self._check()
        if split == "val":
            return self.task_.score(self.handle_, self.outcome_.sigma)
        return self.task_.test_score(self.handle_, self.outcome_.sigma)


def targets_in_raw_units(prepared, split):
    w = getattr(prepared, split)
    return w.targets if prepared.normalizer is None else prepared.normalizer.invert(w.targets)


__all__ = ["AutoPQ", "Prepared", "prepare", "train_flow", "targets_in_raw_units"]
