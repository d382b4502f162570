from .ea import EaConfig, EaState, ea_new, ea_suggest, ea_update
from .records import (
    EarlyStopper,
    PriorStats,
    TrialRecord,
    early_stop,
    plateau,
    population_best,
    prior_stats,
    read_jsonl,
    write_jsonl,
)
from .tpe import TpeState, density_ratio, tpe_new, tpe_suggest, tpe_update

__all__ = [
    "EaConfig",
    "EaState",
    "ea_new",
    "ea_suggest",
    "ea_update",
    "EarlyStopper",
    "PriorStats",
    "TrialRecord",
    "early_stop",
    "plateau",
    "population_best",
    "prior_stats",
    "read_jsonl",
    "write_jsonl",
    "TpeState",
    "density_ratio",
    "tpe_new",
    "tpe_suggest",
    "tpe_update",
]
