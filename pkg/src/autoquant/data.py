"""Dataset ingestion, splitting, normalization and supervised windows."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import (
    DatasetTooShort,
    DataError,
    InvalidBounds,
    MissingColumn,
    NonMonotonicTimestamps,
    UnparsableValue,
    ZeroVariance,
)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Hourly target series with optional exogenous columns.

    ``split`` holds three inclusive ``(start, end)`` index ranges, or None
    before :func:`split_dataset` is applied.
    """

    timestamps: np.ndarray
    target: np.ndarray
    exogenous: dict = field(default_factory=dict)
    split: tuple | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        y = np.asarray(self.target, dtype=float)
        exo = {k: np.asarray(v, dtype=float) for k, v in self.exogenous.items()}
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "exogenous", exo)
        n = len(ts)
        if y.shape != (n,) or any(v.shape != (n,) for v in exo.values()):
            raise DataError("all columns must have the same length as the timestamps")
        if n > 1:
            steps = np.diff(ts).astype(np.int64)
            bad = np.flatnonzero(steps <= 0)
            if bad.size:
                raise NonMonotonicTimestamps(int(bad[0]) + 2)
            if np.any(steps != steps[0]):
                raise DataError("timestamps must have a constant step")

    def __len__(self):
        return len(self.target)

    @property
    def exog_names(self):
        return list(self.exogenous)

    def exog_matrix(self, names=None):
        names = self.exog_names if names is None else list(names)
        if not names:
            return np.zeros((len(self), 0))
        return np.column_stack([self.exogenous[k] for k in names])

    def split_range(self, name):
        if self.split is None:
            raise DataError("dataset has no split; call split_dataset first")
        return self.split[SPLITS.index(name)]

    def split_ids(self):
        """Per-index split id (0 train, 1 val, 2 test)."""
        ids = np.full(len(self), -1, dtype=int)
        if self.split is not None:
            for i, (a, b) in enumerate(self.split):
                ids[a : b + 1] = i
        return ids


def load_csv(path, schema=None):
    """Read a dataset CSV with ``timestamp``, ``target`` and exogenous columns.

    ``schema`` may rename the mandatory columns, e.g.
    ``{"timestamp": "time", "target": "load"}``; ``schema["exogenous"]``
    restricts the exogenous columns to a subset. Rows are numbered from 1
    (first data row) in error messages.
    """
    schema = dict(schema or {})
    ts_col = schema.get("timestamp", "timestamp")
    y_col = schema.get("target", "target")
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"empty dataset file: {path}") from None
        for col in (ts_col, y_col):
            if col not in header:
                raise MissingColumn(col)
        exo_cols = [h for h in header if h not in (ts_col, y_col)]
        if "exogenous" in schema:
            for col in schema["exogenous"]:
                if col not in header:
                    raise MissingColumn(col)
            exo_cols = [h for h in exo_cols if h in schema["exogenous"]]
        idx = {h: i for i, h in enumerate(header)}
        stamps, values = [], {c: [] for c in [y_col, *exo_cols]}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no} has {len(row)} fields, expected {len(header)}")
            raw = row[idx[ts_col]].strip()
            try:
                stamps.append(np.datetime64(dt.datetime.fromisoformat(raw), "s"))
            except ValueError:
                raise UnparsableValue(row_no, ts_col, raw) from None
            for col in values:
                cell = row[idx[col]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise UnparsableValue(row_no, col, cell) from None
                if not np.isfinite(v):
                    raise UnparsableValue(row_no, col, cell)
                values[col].append(v)
    ts = np.array(stamps, dtype="datetime64[s]")
    if len(ts) > 1:
        bad = np.flatnonzero(np.diff(ts).astype(np.int64) <= 0)
        if bad.size:
            raise NonMonotonicTimestamps(int(bad[0]) + 2)
    return TimeSeriesDataset(
        timestamps=ts,
        target=np.array(values[y_col]),
        exogenous={c: np.array(values[c]) for c in exo_cols},
    )


def write_csv(ds, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = ds.exog_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "target", *names])
        for i, t in enumerate(ds.timestamps):
            w.writerow([str(t), repr(float(ds.target[i]))] + [repr(float(ds.exogenous[c][i])) for c in names])


def split_dataset(ds, bounds):
    """Attach train/val/test ranges ``[0, c1]``, ``(c1, c2]``, ``(c2, end]``."""
    c1, c2 = (int(b) for b in bounds)
    n = len(ds)
    if not 0 < c1 < c2 < n:
        raise InvalidBounds(f"need 0 < cut1 < cut2 < {n}, got ({c1}, {c2})")
    return replace(ds, split=((0, c1), (c1 + 1, c2), (c2 + 1, n - 1)))


@dataclass(frozen=True)
class Normalizer:
    """Per-column z-score statistics fitted on the training split."""

    loc: dict
    scale: dict

    def apply(self, ds):
        target = (ds.target - self.loc["target"]) / self.scale["target"]
        exo = {
            k: (v - self.loc[k]) / self.scale[k] if k in self.loc else v
            for k, v in ds.exogenous.items()
        }
        return replace(ds, target=target, exogenous=exo)

    def invert(self, values, column="target"):
        return np.asarray(values, dtype=float) * self.scale[column] + self.loc[column]

    def to_dict(self):
        return {"loc": dict(self.loc), "scale": dict(self.scale)}

    @classmethod
    def from_dict(cls, d):
        return cls(loc=dict(d["loc"]), scale=dict(d["scale"]))


def fit_normalizer(ds, method="zscore", columns=None):
    if method != "zscore":
        raise ValueError(f"unsupported normalization method {method!r}")
    a, b = ds.split_range("train")
    if b < a:
        raise DataError("training split is empty")
    columns = ["target", *ds.exog_names] if columns is None else list(columns)
    loc, scale = {}, {}
    for col in columns:
        x = (ds.target if col == "target" else ds.exogenous[col])[a : b + 1]
        sd = float(np.std(x))
        if not sd > 0:
            raise ZeroVariance(col)
        loc[col], scale[col] = float(np.mean(x)), sd
    return Normalizer(loc, scale)


# features -------------------------------------------------------------------

def lag_feature(series, lag):
    """``out[k] = series[k - lag]``; unavailable rows are NaN."""
    series = np.asarray(series, dtype=float)
    if lag < 0:
        raise ValueError("lag must be non-negative")
    out = np.full(series.shape, np.nan)
    if lag < len(series):
        out[lag:] = series[: len(series) - lag]
    return out


def _month_hour(timestamps):
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    months = ts.astype("datetime64[M]").astype(int) % 12 + 1
    hours = (ts - ts.astype("datetime64[D]")).astype("timedelta64[h]").astype(int)
    return months, hours


def seasonal_features(timestamps):
    """Columns ``s12, c12, s24, c24`` encoding month and hour of day."""
    months, hours = _month_hour(timestamps)
    a12 = 2 * np.pi * months / 12
    a24 = 2 * np.pi * hours / 24
    return np.column_stack([np.sin(a12), np.cos(a12), np.sin(a24), np.cos(a24)])


def workday_feature(timestamps, holidays=()):
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    days = ts.astype("datetime64[D]")
    weekday = (days.astype(int) + 3) % 7  # 1970-01-01 was a Thursday
    hol = np.array(sorted({np.datetime64(d, "D") for d in holidays}), dtype="datetime64[D]")
    is_hol = np.isin(days, hol) if hol.size else np.zeros(len(ts), dtype=bool)
    return ((weekday < 5) & ~is_hol).astype(int)


@dataclass(frozen=True)
class FeatureSpec:
    lags: bool = True
    seasonal: bool = True
    workday: bool = True
    exogenous: tuple | None = None  # None selects every exogenous column
    holidays: frozenset = frozenset()

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        hol = frozenset(dt.date.fromisoformat(h) for h in d.pop("holidays", []))
        exo = d.pop("exogenous", None)
        return cls(holidays=hol, exogenous=None if exo is None else tuple(exo), **d)

    def to_dict(self):
        return {
            "lags": self.lags,
            "seasonal": self.seasonal,
            "workday": self.workday,
            "exogenous": None if self.exogenous is None else list(self.exogenous),
            "holidays": sorted(d.isoformat() for d in self.holidays),
        }


@dataclass(frozen=True)
class WindowSet:
    """Supervised samples, one per forecast origin ``k``.

    ``history`` is ``y[k-H1..k]``; ``exog_history`` and ``exog_future`` the
    exogenous windows ``X[k-H1..k]`` and ``X[k+1..k+H]``; ``targets`` is
    ``y[k+1..k+H]``. ``series`` keeps the full target for methods that look
    further back than ``H1``.
    """

    origins: np.ndarray
    H: int
    H1: int
    history: np.ndarray
    exog_history: np.ndarray
    exog_future: np.ndarray
    calendar: np.ndarray
    targets: np.ndarray
    split_ids: np.ndarray
    series: np.ndarray
    origin_times: np.ndarray
    feature_names: tuple

    def __len__(self):
        return len(self.origins)

    @property
    def features(self):
        n = len(self)
        return np.hstack(
            [
                self.history,
                self.exog_history.reshape(n, -1),
                self.exog_future.reshape(n, -1),
                self.calendar,
            ]
        )

    # The conditioning input of the flow uses the same information set as the
    # point forecasters: past target, exogenous past and future, calendar.
    conditions = features

    def select(self, mask):
        mask = np.asarray(mask)
        return replace(
            self,
            origins=self.origins[mask],
            history=self.history[mask],
            exog_history=self.exog_history[mask],
            exog_future=self.exog_future[mask],
            calendar=self.calendar[mask],
            targets=self.targets[mask],
            split_ids=self.split_ids[mask],
            origin_times=self.origin_times[mask],
        )

    def split(self, name):
        return self.select(self.split_ids == SPLITS.index(name))


def build_windows(ds, H1, H, spec=None, stride=None):
    """One sample per admissible origin; origins start at ``H1`` and step by ``stride`` (default ``H``).

    Samples whose target window straddles a split boundary get split id -1.
    """
    spec = spec or FeatureSpec()
    H, H1 = int(H), int(H1)
    if H < 1 or H1 < 0:
        raise ValueError("need H >= 1 and H1 >= 0")
    n = len(ds)
    if n < H1 + H + 1:
        raise DatasetTooShort(f"dataset of length {n} is shorter than H1 + H + 1 = {H1 + H + 1}")
    stride = H if stride is None else int(stride)
    origins = np.arange(H1, n - H, stride)
    y = ds.target
    exo_names = ds.exog_names if spec.exogenous is None else list(spec.exogenous)
    X = ds.exog_matrix(exo_names)
    E = X.shape[1]

    hist_all = sliding_window_view(y, H1 + 1)  # row j is y[j..j+H1]
    history = hist_all[origins - H1] if spec.lags else np.zeros((len(origins), 0))
    targets = sliding_window_view(y, H)[origins + 1]
    if E:
        xh = sliding_window_view(X, H1 + 1, axis=0)[origins - H1]  # (n, E, H1+1)
        xf = sliding_window_view(X, H, axis=0)[origins + 1]
        exog_history = np.transpose(xh, (0, 2, 1))
        exog_future = np.transpose(xf, (0, 2, 1))
    else:
        exog_history = np.zeros((len(origins), H1 + 1, 0))
        exog_future = np.zeros((len(origins), H, 0))

    origin_times = ds.timestamps[origins]
    cal, cal_names = [], []
    if spec.seasonal:
        cal.append(seasonal_features(origin_times))
        cal_names += ["s12", "c12", "s24", "c24"]
    if spec.workday:
        cal.append(workday_feature(origin_times, spec.holidays)[:, None].astype(float))
        cal_names.append("wd")
    calendar = np.hstack(cal) if cal else np.zeros((len(origins), 0))

    ids = ds.split_ids()
    first, last = ids[origins + 1], ids[origins + H]
    split_ids = np.where(first == last, first, -1)

    names = []
    if spec.lags:
        names += [f"y_lag{H1 - j}" for j in range(H1 + 1)]
    names += [f"{c}_lag{H1 - j}" for j in range(H1 + 1) for c in exo_names]
    names += [f"{c}_ahead{h + 1}" for h in range(H) for c in exo_names]
    names += cal_names
    return WindowSet(
        origins=origins,
        H=H,
        H1=H1,
        history=np.ascontiguousarray(history),
        exog_history=np.ascontiguousarray(exog_history),
        exog_future=np.ascontiguousarray(exog_future),
        calendar=calendar,
        targets=np.ascontiguousarray(targets),
        split_ids=split_ids,
        series=y,
        origin_times=origin_times,
        feature_names=tuple(names),
    )


def make_splits(ds, H1, H, spec=None, train_stride=1):
    """Training windows at ``train_stride``; validation and test windows day-ahead (stride ``H``)."""
    train = build_windows(ds, H1, H, spec, stride=train_stride).split("train")
    evals = build_windows(ds, H1, H, spec)
    return train, evals.split("val"), evals.split("test")
