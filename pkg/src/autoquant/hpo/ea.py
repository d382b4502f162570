"""Asynchronous island-model evolutionary search over point-forecaster configurations."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .records import TrialRecord, population_best, unique_records, write_jsonl


@dataclass(frozen=True)
class EaConfig:
    pop_size: int = 8
    mate_prob: float = 0.7
    mut_prob: float = 0.4
    random_prob: float = 0.2
    sigma_factor: float = 0.05
    num_isles: int = 2
    migration_probability: float = 0.7
    pollination: bool = True

    def __post_init__(self):
        for name in ("mate_prob", "mut_prob", "random_prob", "migration_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.pop_size < 1 or self.num_isles < 1:
            raise ValueError("pop_size and num_isles must be positive")
        if self.sigma_factor < 0:
            raise ValueError("sigma_factor must be non-negative")


@dataclass
class EaState:
    """Islands of evaluated records plus the generator driving every random choice.

    Access from several workers goes through ``lock``; ``suggest`` and
    ``update`` only touch the registry, never evaluation work.
    """

    space: object
    config: EaConfig
    rng: np.random.Generator
    islands: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def records(self):
        return unique_records([r for isl in self.islands for r in isl])

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "rng": self.rng.bit_generator.state,
            "islands": [[r.to_dict() for r in isl] for isl in self.islands],
        }

    @classmethod
    def from_dict(cls, d, space):
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng"]
        islands = [[TrialRecord.from_dict(r) for r in isl] for isl in d["islands"]]
        return cls(space, EaConfig(**d["config"]), rng, islands)

    def to_jsonl(self, path):
        write_jsonl(self.records(), path)


def ea_new(space, config=None, seed=0):
    config = config or EaConfig()
    return EaState(space, config, np.random.default_rng(seed), [[] for _ in range(config.num_isles)])


def _tournament(pool, rng):
    i, j = rng.integers(len(pool), size=2)
    a, b = pool[i], pool[j]
    return a if (a.score, a.timestamp) <= (b.score, b.timestamp) else b


def ea_suggest(state, island=0):
    """Next configuration for a worker on ``island``."""
    with state.lock:
        cfg, rng, space = state.config, state.rng, state.space
        island %= len(state.islands)
        pop = [r for r in state.islands[island] if r.ok]
        if len(pop) < cfg.pop_size or rng.random() < cfg.random_prob:
            return space.sample(rng)
        pool = population_best(pop, cfg.pop_size)
        p1, p2 = _tournament(pool, rng), _tournament(pool, rng)
        child = {}
        for dim in space:
            v = p1.config[dim.name]
            if rng.random() < cfg.mate_prob:
                v = p2.config[dim.name]
            if rng.random() < cfg.mut_prob:
                v = dim.mutate(v, rng, cfg.sigma_factor)
            child[dim.name] = dim.clip(dim.coerce(v)) if dim.kind != "cat" else v
        return child


def ea_update(state, record, island=0):
    """Insert ``record``; with the migration probability copy it to another island."""
    with state.lock:
        island %= len(state.islands)
        state.islands[island].append(record)
        n = len(state.islands)
        if n > 1 and state.config.pollination and state.rng.random() < state.config.migration_probability:
            other = (island + 1 + int(state.rng.integers(n - 1))) % n
            state.islands[other].append(record)
        return state
