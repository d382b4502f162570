"""One-dimensional tree-structured Parzen estimator over ``ln sigma``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..exceptions import BadBounds
from ..space import SIGMA_BOUNDS
from .records import PriorStats


@dataclass
class TpeState:
    low: float
    high: float
    prior: PriorStats | None
    rng: np.random.Generator
    gamma: float = 0.25
    n_startup: int = 5
    n_candidates: int = 64
    bandwidth: float | None = None
    obs: list = field(default_factory=list)

    @property
    def log_bounds(self):
        return math.log(self.low), math.log(self.high)

    @property
    def lognormal(self):
        return self.prior is not None and not self.prior.uniform

    def prior_logpdf(self, x):
        lo, hi = self.log_bounds
        if self.lognormal:
            return norm.logpdf(x, self.prior.m, self.prior.s)
        return np.where((x >= lo) & (x <= hi), -math.log(hi - lo), -np.inf)

    def prior_sample(self, size=None):
        lo, hi = self.log_bounds
        if self.lognormal:
            x = self.rng.normal(self.prior.m, self.prior.s, size=size)
        else:
            x = self.rng.uniform(lo, hi, size=size)
        return np.clip(x, lo, hi)


def tpe_new(bounds=SIGMA_BOUNDS, prior=None, seed=0, gamma=0.25, n_startup=5, n_candidates=64, bandwidth=None):
    """Fresh optimizer state.

    Parameters
    ----------
    bounds : (float, float)
        Positive search bounds for ``sigma``.
    prior : PriorStats or None
        Log-normal prior on ``sigma``; ``None`` or degenerate statistics
        give the log-uniform prior.
    bandwidth : float, optional
        Fixed kernel width in ``ln sigma`` units instead of Silverman's rule.
    """
    low, high = map(float, bounds)
    if not (0 < low < high):
        raise BadBounds(f"need 0 < low < high, got {bounds}")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    return TpeState(low, high, prior, np.random.default_rng(seed), gamma, n_startup, n_candidates, bandwidth)


def _kde_logpdf(state, x, centers):
    """Mixture of the prior and Gaussian kernels at ``centers`` (equal weights)."""
    lo, hi = state.log_bounds
    x = np.atleast_1d(x)
    comps = [state.prior_logpdf(x)]
    if len(centers):
        bw = _bandwidth(state, centers)
        comps.append(norm.logpdf(x[:, None], np.asarray(centers)[None, :], bw).T)
    stacked = np.vstack([np.atleast_2d(c) for c in comps])
    return np.logaddexp.reduce(stacked, axis=0) - math.log(stacked.shape[0])


def _bandwidth(state, centers):
    """Silverman's rule, floored at the prior width over ``min(100, n + 1)``."""
    if state.bandwidth is not None:
        return state.bandwidth
    lo, hi = state.log_bounds
    span = hi - lo
    ref = state.prior.s if state.lognormal else span
    n = len(centers)
    sd = float(np.std(centers)) if n > 1 else 0.0
    bw = 1.06 * sd * n ** (-0.2)
    return float(np.clip(bw, ref / min(100, n + 1), span))


def split_observations(state):
    order = sorted(range(len(state.obs)), key=lambda i: (state.obs[i][1], i))
    n_good = max(1, math.ceil(state.gamma * len(order)))
    good = [math.log(state.obs[i][0]) for i in order[:n_good]]
    bad = [math.log(state.obs[i][0]) for i in order[n_good:]]
    return good, bad


def density_ratio(state, x):
    """``ln l(x) - ln g(x)`` at log-sigma values ``x``."""
    good, bad = split_observations(state)
    return _kde_logpdf(state, x, good) - _kde_logpdf(state, x, bad)


def tpe_suggest(state):
    lo, hi = state.log_bounds
    if len(state.obs) < state.n_startup:
        x = float(state.prior_sample())
        return float(np.clip(math.exp(x), state.low, state.high))
    good, _ = split_observations(state)
    n_comp = len(good) + 1
    comp = state.rng.integers(n_comp, size=state.n_candidates)
    bw = _bandwidth(state, good)
    cand = np.where(
        comp == 0,
        state.prior_sample(state.n_candidates),
        np.asarray(good)[np.maximum(comp - 1, 0)] + bw * state.rng.standard_normal(state.n_candidates),
    )
    cand = np.clip(cand, lo, hi)
    best = cand[int(np.argmax(density_ratio(state, cand)))]
    return float(np.clip(math.exp(best), state.low, state.high))


def tpe_update(state, sigma, score):
    state.obs.append((float(sigma), float(score)))
    return state
