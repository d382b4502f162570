"""Search orchestration: joint search, successive halving and checkpoints."""

from .estimator import AutoPQ, Prepared, prepare, targets_in_raw_units, train_flow
from .halving import CashOutcome, ResultStore, autopq_default, successive_halving, warm_start_store
from .joint import (
    JointResult,
    SigmaResult,
    WorkerPanic,
    derive_seed,
    joint_optimize,
    joint_optimize_ablation,
    optimize_sigma,
    run_pool,
)
from .task import (
    FitHandle,
    ForecastTask,
    SyntheticLandscape,
    Task,
    check_budget,
    constant_landscape,
    default_cost,
    dominance_landscape,
    quadratic_sigma,
)

__all__ = [
    "AutoPQ",
    "Prepared",
    "prepare",
    "targets_in_raw_units",
    "train_flow",
    "CashOutcome",
    "FitHandle",
    "ForecastTask",
    "JointResult",
    "ResultStore",
    "SigmaResult",
    "SyntheticLandscape",
    "Task",
    "WorkerPanic",
    "autopq_default",
    "check_budget",
    "constant_landscape",
    "default_cost",
    "derive_seed",
    "dominance_landscape",
    "joint_optimize",
    "joint_optimize_ablation",
    "optimize_sigma",
    "quadratic_sigma",
    "run_pool",
    "successive_halving",
    "warm_start_store",
]
