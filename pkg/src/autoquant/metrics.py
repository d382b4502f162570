"""Probabilistic scores: CRPS, pinball loss, interval coverage, significance."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .exceptions import BadLevel, LengthMismatch, ShapeMismatch, TooFewSamples
from .forecast import QuantileForecast


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    n: int

    def __post_init__(self):
        if not math.isfinite(self.value) or self.n < 1:
            raise ValueError(f"invalid metric value {self}")

    def to_dict(self, **extra):
        return {"metric": self.name, "value": self.value, "n": self.n, **extra}


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def crps_energy(samples, y):
    """Sample CRPS ``E|X - y| - E|X - X'| / 2`` over the last axis.

    The pairwise term is written over the gaps of the sorted samples, so it
    is exact for the empirical distribution, O(M log M), and vanishes
    exactly for a degenerate sample set.
    """
    x = np.sort(np.asarray(samples, dtype=float), axis=-1)
    y = np.asarray(y, dtype=float)
    M = x.shape[-1]
    term1 = np.mean(np.abs(x - y[..., None]), axis=-1)
    k = np.arange(1, M)
    term2 = np.sum(k * (M - k) * np.diff(x, axis=-1), axis=-1) / M**2
    return term1 - term2


def crps_integral(samples, y):
    """CRPS of one sample set by integrating ``(F(x) - 1{y <= x})^2`` piecewise."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    M = len(x)
    pts = np.sort(np.append(x, float(y)))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        F = np.searchsorted(x, a, side="right") / M
        ind = 1.0 if y <= a else 0.0
        total += (F - ind) ** 2 * (b - a)
    return total


def pinball(q, tau, y):
    if not 0 < tau < 1:
        raise BadLevel(f"level must lie in (0, 1), got {tau}")
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - q
    out = np.where(d >= 0, tau * d, (tau - 1) * d)
    return float(out) if out.ndim == 0 else out


def crps_quantiles(q, levels, y):
    """Pinball-grid CRPS ``2 * mean_l PL_l(q_l, y)`` over the last axis.

    Exact for an empirical distribution when the levels are the midpoint
    plotting positions ``(i - 0.5) / M`` of its ``M`` samples.
    """
    q = np.asarray(q, dtype=float)
    levels = np.asarray(levels, dtype=float)
    y = np.asarray(y, dtype=float)[..., None]
    d = y - q
    pl = np.where(d >= 0, levels * d, (levels - 1) * d)
    return 2 * pl.mean(axis=-1)


def crps_single(samples, y, levels=None):
    """CRPS for one observation.

    With ``levels`` the input is a quantile grid and the pinball-grid
    approximation is used; otherwise it is a sample multiset scored exactly.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if len(s) < 2:
        raise TooFewSamples("CRPS needs at least two support points")
    if levels is not None:
        return float(crps_quantiles(s, levels, y))
    return crps_integral(s, y)


def _cell_crps(forecast, y_true):
    y_true = np.asarray(y_true, dtype=float)
    if isinstance(forecast, QuantileForecast):
        if forecast.values.shape[:2] != y_true.shape:
            raise ShapeMismatch(f"forecast cells {forecast.values.shape[:2]} vs truth {y_true.shape}")
        if forecast.samples is not None:
            return crps_energy(forecast.samples, y_true)
        return crps_quantiles(forecast.values, forecast.levels, y_true)
    samples = np.asarray(forecast, dtype=float)
    if samples.shape[:-1] != y_true.shape:
        raise ShapeMismatch(f"sample cells {samples.shape[:-1]} vs truth {y_true.shape}")
    if samples.shape[-1] < 2:
        raise TooFewSamples("CRPS needs at least two samples per cell")
    return crps_energy(samples, y_true)


def crps_dataset(forecast, y_true):
    """Mean CRPS over all (origin, step) cells."""
    cells = _cell_crps(forecast, y_true)
    return MetricValue("crps", float(np.mean(cells)), int(cells.size))


def pi_coverage_width(qf, y_true, pair):
    lo = qf.quantile(pair[0])
    hi = qf.quantile(pair[1])
    y_true = np.asarray(y_true, dtype=float)
    if lo.shape != y_true.shape:
        raise ShapeMismatch(f"forecast cells {lo.shape} vs truth {y_true.shape}")
    covered = (lo <= y_true) & (y_true <= hi)
    return float(covered.mean()), float(np.mean(hi - lo))


def postprocess_nonnegative(qf):
    """Clamp quantiles (and retained samples) at zero."""
    samples = None if qf.samples is None else np.maximum(qf.samples, 0.0)
    return qf.with_values(np.maximum(qf.values, 0.0), samples)


def one_tailed_paired_ttest(a, b):
    """p-value for ``H1: mean(b - a) > 0`` from the paired Student t statistic."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"paired samples differ in length: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise LengthMismatch("need at least two pairs")
    d = b - a
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        return 0.5 if mean == 0 else (0.0 if mean > 0 else 1.0)
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    # P(T > t) via the regularized incomplete beta function
    tail = 0.5 * betainc(df / 2, 0.5, df / (df + t * t))
    return float(tail if t > 0 else 1 - tail)


def metric_report(value, split, method, config):
    return value.to_dict(split=split, method=method, config_hash=config_hash(config))
