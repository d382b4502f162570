"""Seeded synthetic datasets whose true predictive distributions are known.

Every generator has Gaussian conditional marginals, so the oracle CRPS can
be estimated by Monte Carlo and checked against the closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import FeatureSpec, TimeSeriesDataset, build_windows, split_dataset
from .exceptions import ConfigError, UnknownGenerator
from .metrics import crps_energy

GENERATORS = ("hetero_ar1", "sinusoid_exo", "iid_gaussian")

_DEFAULTS = {
    "hetero_ar1": {"phi": 0.8, "base": 0.2, "amp": 0.3, "noise_scale": 1.0, "y0": 0.0},
    "sinusoid_exo": {"amp": 1.0, "beta": 0.5, "noise": 0.3},
    "iid_gaussian": {"mu": 0.0, "sigma": 1.0},
}


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str
    length: int = 2000
    seed: int = 0
    params: dict = field(default_factory=dict)
    splits: tuple = (0.7, 0.85)
    start: str = "2020-01-01T00:00:00"

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise UnknownGenerator(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        unknown = set(self.params) - set(_DEFAULTS[self.generator])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.generator}: {sorted(unknown)}")
        if self.length < 10:
            raise ConfigError("length must be at least 10")
        a, b = self.splits
        if not 0 < a < b < 1:
            raise ConfigError("split fractions must satisfy 0 < a < b < 1")
        p = self.full_params()
        if self.generator == "hetero_ar1" and (abs(p["phi"]) >= 1 or p["noise_scale"] < 0):
            raise ConfigError("hetero_ar1 needs |phi| < 1 and noise_scale >= 0")
        if self.generator == "iid_gaussian" and p["sigma"] < 0:
            raise ConfigError("sigma must be non-negative")

    def full_params(self):
        return {**_DEFAULTS[self.generator], **self.params}

    @classmethod
    def from_dict(cls, d):
        if "generator" not in d:
            raise ConfigError("synthetic spec lacks 'generator'")
        known = {"generator", "length", "seed", "params", "splits", "start"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown synthetic spec keys {sorted(extra)}")
        d = dict(d)
        if "splits" in d:
            d["splits"] = tuple(d["splits"])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _hour_scale(k, p):
    return p["noise_scale"] * (p["base"] + p["amp"] * np.abs(np.sin(2 * np.pi * np.asarray(k) / 24)))


@dataclass(frozen=True)
class OracleHandle:
    """Exact conditional law of ``y[k+1..k+H]`` given the history up to ``k``."""

    spec: SyntheticSpec
    dataset: TimeSeriesDataset

    def marginals(self, origins, H):
        """Means and standard deviations, each of shape ``(n_origins, H)``."""
        p = self.spec.full_params()
        k = np.asarray(origins)[:, None]
        h = np.arange(1, H + 1)[None, :]
        y = self.dataset.target
        g = self.spec.generator
        if g == "hetero_ar1":
            phi = p["phi"]
            mean = phi**h * y[k]
            # var_h = sum_{j<h} phi^{2(h-1-j)} s(k+j)^2, built recursively over h
            var = np.zeros((len(k), H))
            acc = np.zeros(len(k))
            for j in range(H):
                acc = phi**2 * acc + _hour_scale(k[:, 0] + j, p) ** 2
                var[:, j] = acc
            return mean, np.sqrt(var)
        if g == "sinusoid_exo":
            t = k + h
            x = self.dataset.exogenous["x"][t]
            mean = p["amp"] * np.sin(2 * np.pi * t / 24) + p["beta"] * x
            return mean, np.full(mean.shape, float(p["noise"]))
        mean = np.full((len(k), H), float(p["mu"]))
        return mean, np.full(mean.shape, float(p["sigma"]))


def generate(spec):
    """Build the dataset (with split ranges) and its oracle handle."""
    if isinstance(spec, dict):
        spec = SyntheticSpec.from_dict(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.length
    p = spec.full_params()
    k = np.arange(n)
    exo = {}
    if spec.generator == "hetero_ar1":
        eps = rng.standard_normal(n)
        y = np.empty(n)
        y[0] = p["y0"]
        s = _hour_scale(k, p)
        for i in range(n - 1):
            y[i + 1] = p["phi"] * y[i] + s[i] * eps[i]
        exo["x"] = np.sin(2 * np.pi * k / 24)
    elif spec.generator == "sinusoid_exo":
        x = np.cumsum(rng.standard_normal(n)) * 0.1
        x -= x.mean()
        y = p["amp"] * np.sin(2 * np.pi * k / 24) + p["beta"] * x + p["noise"] * rng.standard_normal(n)
        exo["x"] = x
    else:
        y = p["mu"] + p["sigma"] * rng.standard_normal(n)
    ts = np.datetime64(spec.start, "s") + k.astype("timedelta64[h]").astype("timedelta64[s]")
    ds = TimeSeriesDataset(timestamps=ts, target=y, exogenous=exo)
    a, b = spec.splits
    ds = split_dataset(ds, (int(a * n) - 1, int(b * n) - 1))
    return ds, OracleHandle(spec, ds)


def gaussian_crps(mean, std, y):
    """Closed-form CRPS of ``N(mean, std^2)`` at ``y``; ``std = 0`` gives ``|y - mean|``."""
    mean, std, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mean, std, y)))
    shape = y.shape
    mean, std, y = (np.atleast_1d(a) for a in (mean, std, y))
    out = np.abs(y - mean)
    pos = std > 0
    z = (y[pos] - mean[pos]) / std[pos]
    out[pos] = std[pos] * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / math.sqrt(math.pi))
    return out.reshape(shape) if shape else float(out[0])


def _cells(handle, split, H1, H):
    windows = build_windows(handle.dataset, H1, H, FeatureSpec(seasonal=False, workday=False))
    return windows.split(split).origins


def oracle_crps(handle, split="test", H1=24, H=24, n_draws=10_000, seed=0, scale=1.0, exact=False, n_batches=10):
    """CRPS of the true predictive distribution on day-ahead windows of ``split``.

    Returns ``(value, standard_error)``. The Monte-Carlo error is estimated
    from ``n_batches`` independent batches of draws. ``scale`` divides the
    result, e.g. the target's normalisation scale. With ``exact=True`` the
    closed form is used and the error is zero.
    """
    origins = _cells(handle, split, H1, H)
    mean, std = handle.marginals(origins, H)
    y = handle.dataset.target[origins[:, None] + np.arange(1, H + 1)[None, :]]
    if exact:
        return float(gaussian_crps(mean, std, y).mean() / scale), 0.0
    rng = np.random.default_rng(seed)
    per = n_draws // n_batches
    vals = []
    for _ in range(n_batches):
        draws = mean[..., None] + std[..., None] * rng.standard_normal(mean.shape + (per,))
        vals.append(crps_energy(draws, y).mean())
    vals = np.asarray(vals) / scale
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_batches))


def oracle_windows(handle, origins, H):
    """Oracle marginals aligned with explicit window origins."""
    return handle.marginals(np.asarray(origins), H)
