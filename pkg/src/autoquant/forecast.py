"""Point and quantile forecast containers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .exceptions import DataError, LevelMissing


@dataclass(frozen=True)
class PointForecast:
    values: np.ndarray  # (n_origins, H)
    origins: np.ndarray
    origin_times: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != len(self.origins):
            raise DataError(f"point forecast shape {v.shape} does not match {len(self.origins)} origins")
        if not np.all(np.isfinite(v)):
            raise DataError("point forecast contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def H(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class QuantileForecast:
    """Quantiles ``values[origin, h, level]``.

    ``samples`` optionally retains the draws the quantiles were computed
    from, shape ``(n_origins, H, M)``; CRPS uses them when present.
    """

    values: np.ndarray
    levels: np.ndarray
    origins: np.ndarray
    origin_times: np.ndarray | None = None
    samples: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if v.ndim != 3 or v.shape[0] != len(self.origins) or v.shape[2] != len(lv):
            raise DataError(f"quantile tensor shape {v.shape} inconsistent with origins/levels")
        if np.any(np.diff(lv) <= 0) or np.any((lv <= 0) | (lv >= 1)):
            raise DataError("levels must be strictly increasing in (0, 1)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "levels", lv)

    @property
    def H(self):
        return self.values.shape[1]

    def level_index(self, level):
        hits = np.flatnonzero(np.isclose(self.levels, level, atol=1e-9))
        return int(hits[0]) if hits.size else None

    def quantile(self, level):
        i = self.level_index(level)
        if i is None:
            raise LevelMissing(f"level {level} not in forecast")
        return self.values[:, :, i]

    def with_values(self, values, samples=None):
        return replace(self, values=values, samples=samples)

    def to_csv(self, path, timestamps=None):
        """Write long-format rows ``origin_timestamp,h,level,value`` (h from 1)."""
        stamps = self.origin_times if timestamps is None else timestamps
        if stamps is None:
            stamps = self.origins
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["origin_timestamp", "h", "level", "value"])
            n, H, L = self.values.shape
            for i in range(n):
                for h in range(H):
                    for j in range(L):
                        w.writerow([str(stamps[i]), h + 1, repr(float(self.levels[j])), repr(float(self.values[i, h, j]))])


def read_quantile_csv(path):
    """Inverse of :meth:`QuantileForecast.to_csv`; origins are the timestamps."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"forecast file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for col in ("origin_timestamp", "h", "level", "value"):
            if col not in cols:
                raise DataError(f"forecast CSV lacks column {col!r}")
        rows = list(reader)
    try:
        stamps = sorted({np.datetime64(r["origin_timestamp"], "s") for r in rows})
        levels = sorted({float(r["level"]) for r in rows})
        H = max(int(r["h"]) for r in rows)
    except (ValueError, TypeError) as exc:
        raise DataError(f"malformed forecast CSV: {exc}") from None
    si = {s: i for i, s in enumerate(stamps)}
    li = {lv: j for j, lv in enumerate(levels)}
    vals = np.full((len(stamps), H, len(levels)), np.nan)
    for r in rows:
        vals[si[np.datetime64(r["origin_timestamp"], "s")], int(r["h"]) - 1, li[float(r["level"])]] = float(r["value"])
    if np.isnan(vals).any():
        raise DataError("forecast CSV is missing (origin, h, level) cells")
    stamps = np.array(stamps, dtype="datetime64[s]")
    return QuantileForecast(values=vals, levels=np.array(levels), origins=np.arange(len(stamps)), origin_times=stamps)
