"""Trial records, prior statistics and plateau early stopping."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import EmptyPopulation
from ..space import jsonable


@dataclass
class TrialRecord:
    """One evaluated configuration.

    ``score`` is the validation objective (``inf`` for a failed trial),
    ``sigma`` the best latent sampling std found for this configuration and
    ``timestamp`` the completion time on the run clock.
    """

    uid: str
    method: str
    config: dict
    score: float
    sigma: float | None = None
    wall_seconds: float = 0.0
    timestamp: float = 0.0
    worker: int = 0
    island: int = 0
    status: str = "ok"
    inner_iters: int = 0
    round: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok" and math.isfinite(self.score)

    def to_dict(self):
        d = asdict(self)
        d["config"] = jsonable(self.config)
        d["score"] = self.score if math.isfinite(self.score) else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["score"] = float("inf") if d.get("score") is None else float(d["score"])
        return cls(**d)


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def unique_records(records):
    seen, out = set(), []
    for r in records:
        if r.uid not in seen:
            seen.add(r.uid)
            out.append(r)
    return out


def population_best(records, k=1):
    """Top-``k`` records by ascending score, ties to the earlier timestamp."""
    records = unique_records(records)
    if not records:
        raise EmptyPopulation("no evaluated individuals")
    return sorted(records, key=lambda r: (r.score, r.timestamp))[:k]


@dataclass(frozen=True)
class PriorStats:
    """Log-normal prior parameters for the sampling std.

    ``uniform`` is set when the statistics are degenerate (a single
    contributor or zero spread) and the uniform prior should be used.
    """

    m: float
    s: float
    n: int

    @property
    def uniform(self):
        return self.n < 2 or self.s <= 0


def prior_stats(records):
    sig = [r.sigma for r in unique_records(records) if r.ok and r.sigma is not None]
    if not sig:
        raise EmptyPopulation("no records carry an optimal sampling std")
    logs = np.log(np.asarray(sig, dtype=float))
    s = float(np.std(logs, ddof=1)) if len(logs) > 1 else 0.0
    return PriorStats(float(np.mean(logs)), s, len(logs))


def plateau(scores, k=5, threshold=5e-4):
    """Population std of the ``k`` lowest scores is below ``threshold``."""
    if len(scores) < k:
        return False
    best = np.sort(np.asarray(scores, dtype=float))[:k]
    if not np.all(np.isfinite(best)):
        return False
    return bool(np.std(best) < threshold)


def early_stop(history, k=5, threshold=5e-4, patience=5):
    """True when the plateau predicate held after each of the last ``patience`` completions."""
    n = len(history)
    if n < k or n < patience:
        return False
    return all(plateau(history[: n - j], k, threshold) for j in range(patience))


class EarlyStopper:
    """Incremental form of :func:`early_stop`."""

    def __init__(self, k=5, threshold=5e-4, patience=5):
        self.k, self.threshold, self.patience = k, threshold, patience
        self.scores = []
        self.streak = 0

    def update(self, score):
        self.scores.append(float(score))
        self.streak = self.streak + 1 if plateau(self.scores, self.k, self.threshold) else 0
        return self.stop

    @property
    def stop(self):
        return self.streak >= self.patience
