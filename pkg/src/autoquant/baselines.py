"""Prediction intervals from point forecasts and validation residuals.

All three constructions calibrate per horizon step and return a
:class:`QuantileForecast` whose two levels are the interval endpoints.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from .exceptions import CalibrationTooSmall, ShapeMismatch, TooFewResiduals
from .forecast import QuantileForecast


def residuals(pf, y_true):
    """Absolute residuals ``|y_hat - y|`` with shape ``(n_origins, H)``."""
    values = getattr(pf, "values", pf)
    values = np.asarray(values, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if values.shape != y_true.shape:
        raise ShapeMismatch(f"forecast {values.shape} vs truth {y_true.shape}")
    return np.abs(values - y_true)


def _interval(pf, half_width, lo_level, hi_level):
    half_width = np.broadcast_to(half_width, pf.values.shape)
    vals = np.stack([pf.values - half_width, pf.values + half_width], axis=-1)
    if lo_level == hi_level:
        # zero-confidence interval, keep two distinct levels around the median
        lo_level, hi_level = 0.5 - 1e-9, 0.5 + 1e-9
    lo_level, hi_level = max(lo_level, 1e-12), min(hi_level, 1 - 1e-12)
    return QuantileForecast(
        values=vals,
        levels=np.array([lo_level, hi_level]),
        origins=pf.origins,
        origin_times=pf.origin_times,
    )


def _check(rs, gamma=None):
    rs = np.asarray(rs, dtype=float)
    if rs.ndim != 2 or rs.shape[0] < 2:
        raise TooFewResiduals("need at least two residuals per horizon step")
    if gamma is not None and not 0 <= gamma <= 1:
        raise ValueError(f"confidence must lie in [0, 1], got {gamma}")
    return rs


def gaussian_pi(pf, rs, gamma):
    """``y_hat +/- z_{(1+gamma)/2} * sigma_h`` with ``sigma_h = RMS(r_h)``."""
    rs = _check(rs, gamma)
    if rs.shape[1] != pf.H:
        raise ShapeMismatch("residual horizon differs from forecast horizon")
    sigma = np.sqrt(np.mean(rs**2, axis=0))
    z = norm.ppf((1 + gamma) / 2) if gamma < 1 else np.inf
    return _interval(pf, z * sigma, (1 - gamma) / 2, (1 + gamma) / 2)


def nearest_rank(values, q):
    """Nearest-rank (ceiling) empirical quantile of a 1-D sample."""
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(len(v) * q - 1e-12))
    return v[min(rank, len(v)) - 1]


def empirical_pi(pf, rs, gamma):
    """``y_hat +/- w_h`` with ``w_h`` the nearest-rank gamma-quantile of ``r_h``."""
    rs = _check(rs, gamma)
    if rs.shape[1] != pf.H:
        raise ShapeMismatch("residual horizon differs from forecast horizon")
    w = np.array([nearest_rank(rs[:, h], gamma) for h in range(rs.shape[1])])
    return _interval(pf, w, (1 - gamma) / 2, (1 + gamma) / 2)


def conformal_rank(n, alpha, H):
    """Finite-sample rank ``ceil((n + 1)(1 - alpha / H))`` of the critical score."""
    return math.ceil((n + 1) * (1 - alpha / H) - 1e-12)


def conformal_pi(pf, rs, alpha, H=None):
    """Bonferroni-corrected split-conformal interval per horizon step."""
    if not 0 < alpha < 1:
        raise ValueError(f"miscoverage must lie in (0, 1), got {alpha}")
    rs = np.asarray(rs, dtype=float)
    H = pf.H if H is None else int(H)
    if rs.ndim != 2 or rs.shape[1] != pf.H:
        raise ShapeMismatch("residual horizon differs from forecast horizon")
    n = rs.shape[0]
    rank = conformal_rank(n, alpha, H)
    if rank > n:
        raise CalibrationTooSmall(f"rank {rank} exceeds calibration size {n} (alpha={alpha}, H={H})")
    w = np.sort(rs, axis=0)[rank - 1]
    return _interval(pf, w, alpha / (2 * H), 1 - alpha / (2 * H))
