"""Hyperparameter search spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BadBounds, ConfigError

KINDS = ("real", "log", "int", "cat", "int_tuple")


@dataclass(frozen=True)
class Dimension:
    """One searchable hyperparameter.

    ``int_tuple`` encodes a variable-length tuple of integers such as MLP
    layer widths: length in ``[min_len, max_len]``, entries in ``[low, high]``.
    """

    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple = ()
    default: object = None
    min_len: int = 1
    max_len: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dimension kind {self.kind!r}")
        if self.kind == "cat":
            if not self.choices:
                raise BadBounds(f"{self.name}: categorical dimension needs choices")
        elif not (self.low is not None and self.high is not None and self.low < self.high):
            raise BadBounds(f"{self.name}: need low < high, got [{self.low}, {self.high}]")
        if self.kind == "log" and self.low <= 0:
            raise BadBounds(f"{self.name}: log dimension needs a positive lower bound")
        if self.default is not None and not self.contains(self.default):
            raise BadBounds(f"{self.name}: default {self.default!r} outside the space")

    @property
    def span(self):
        if self.kind == "log":
            return math.log(self.high) - math.log(self.low)
        return self.high - self.low

    def contains(self, v):
        if self.kind == "cat":
            return v in self.choices
        if self.kind == "int_tuple":
            v = tuple(v)
            return self.min_len <= len(v) <= self.max_len and all(self.low <= x <= self.high for x in v)
        return self.low <= v <= self.high

    def sample(self, rng):
        if self.kind == "real":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "log":
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        if self.kind == "int":
            return int(rng.integers(self.low, self.high + 1))
        if self.kind == "cat":
            return self.choices[int(rng.integers(len(self.choices)))]
        n = int(rng.integers(self.min_len, self.max_len + 1))
        return tuple(int(x) for x in rng.integers(self.low, self.high + 1, size=n))

    def clip(self, v):
        if self.kind == "cat":
            return v
        if self.kind == "int_tuple":
            return tuple(int(min(max(round(x), self.low), self.high)) for x in v)
        v = min(max(v, self.low), self.high)
        return int(round(v)) if self.kind == "int" else float(v)

    def mutate(self, v, rng, sigma_factor):
        """Gaussian step of ``sigma_factor`` times the range; categoricals resample."""
        if self.kind == "cat":
            return self.sample(rng)
        if self.kind == "log":
            step = rng.normal(0.0, sigma_factor * self.span)
            return self.clip(math.exp(math.log(v) + step))
        if self.kind == "int_tuple":
            v = list(v)
            if rng.random() < 0.5:
                if len(v) < self.max_len and (rng.random() < 0.5 or len(v) == self.min_len):
                    v.append(v[-1])
                elif len(v) > self.min_len:
                    v.pop()
            v = [x + rng.normal(0.0, sigma_factor * self.span) for x in v]
            return self.clip(v)
        return self.clip(v + rng.normal(0.0, sigma_factor * self.span))

    def coerce(self, v):
        if self.kind == "int_tuple":
            return tuple(int(x) for x in v)
        if self.kind == "int":
            return int(v)
        if self.kind in ("real", "log"):
            return float(v)
        return v

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "default": self.default}
        if self.kind == "cat":
            d["choices"] = list(self.choices)
        else:
            d["low"], d["high"] = self.low, self.high
        if self.kind == "int_tuple":
            d["min_len"], d["max_len"] = self.min_len, self.max_len
            d["default"] = list(self.default) if self.default is not None else None
        return d


@dataclass(frozen=True)
class HyperparamSpace:
    dims: tuple = field(default_factory=tuple)

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dimension names in {names}")

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, name):
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def names(self):
        return [d.name for d in self.dims]

    def defaults(self):
        return {d.name: d.default for d in self.dims}

    def sample(self, rng):
        return {d.name: d.sample(rng) for d in self.dims}

    def coerce(self, config):
        return {d.name: d.coerce(config[d.name]) for d in self.dims}

    def validate(self, config):
        missing = [n for n in self.names if n not in config]
        if missing:
            raise ConfigError(f"configuration lacks {missing}")
        for d in self.dims:
            if not d.contains(config[d.name]):
                raise ConfigError(f"{d.name}={config[d.name]!r} outside its range")
        return config

    def extend(self, *dims):
        return HyperparamSpace(self.dims + tuple(dims))

    def to_dict(self):
        return {"dims": [d.to_dict() for d in self.dims]}


SIGMA_BOUNDS = (0.01, 3.0)
SIGMA_DEFAULT = 0.1


def sigma_dimension():
    """The latent sampling standard deviation searched by the quantile stage."""
    return Dimension("sigma", "log", *SIGMA_BOUNDS, default=SIGMA_DEFAULT)


def jsonable(config):
    return {k: list(v) if isinstance(v, tuple) else (v.item() if isinstance(v, np.generic) else v) for k, v in config.items()}
