"""Result store, successive halving over methods and the default pipeline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..exceptions import CheckpointError, CheckpointVersionError, EmptyPopulation
from ..hpo import TrialRecord, ea_new, ea_update, population_best, read_jsonl, write_jsonl
from ..hpo.ea import EaState
from ..space import jsonable, sigma_dimension
from .joint import derive_seed, joint_optimize, optimize_sigma
from .task import check_budget

STORE_VERSION = 1


@dataclass
class CashOutcome:
    """Selected method and hyperparameters with the pruning history that led to them."""

    winner: str
    config: dict
    sigma: float
    val_score: float
    test_score: float | None
    history: list = field(default_factory=list)
    bests: dict = field(default_factory=dict)
    mode: str = "advanced"
    handle: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "winner": self.winner,
            "config": jsonable(self.config),
            "sigma": self.sigma,
            "val_score": self.val_score,
            "test_score": self.test_score,
            "history": self.history,
            "bests": self.bests,
            "mode": self.mode,
        }


class ResultStore:
    """Per-method trial logs, EA populations and the halving progress.

    The best record of a method is always the minimum over its log, so it
    can only improve as rounds go by.
    """

    def __init__(self, methods, seed=0, mode="advanced", ablation=False):
        self.methods = list(methods)
        self.seed = int(seed)
        self.mode = mode
        self.ablation = bool(ablation)
        self.active = list(self.methods)
        self.logs = {m: [] for m in self.methods}
        self.ea = {m: None for m in self.methods}
        self.round = 0
        self.done_in_round = []
        self.history = []
        self.clock = 0.0
        self.models = {}
        self.finished = False

    def best(self, method):
        try:
            return population_best(self.logs[method], 1)[0]
        except EmptyPopulation:
            return None

    def bests(self):
        out = {}
        for m in self.methods:
            b = self.best(m)
            out[m] = None if b is None or not math.isfinite(b.score) else b.score
        return out

    def add(self, method, records, ea_state=None):
        self.logs[method].extend(records)
        if ea_state is not None:
            self.ea[method] = ea_state

    def ranking(self, methods):
        def key(m):
            b = self.best(m)
            return (math.inf, math.inf) if b is None else (b.score, b.timestamp)

        return sorted(methods, key=lambda m: (key(m), self.methods.index(m)))

    def prune(self, note=None):
        """Keep the best ``ceil(n / 2)`` active methods."""
        n = len(self.active)
        kept = self.ranking(self.active)[: math.ceil(n / 2)]
        entry = {"round": self.round, "active": list(self.active), "bests": {m: self.bests()[m] for m in self.active}}
        entry["kept"] = [m for m in self.active if m in kept]
        if note:
            entry["note"] = note
        self.history.append(entry)
        self.active = entry["kept"]
        self.round += 1
        self.done_in_round = []
        return self.active

    # persistence --------------------------------------------------------
    def to_dict(self):
        return {
            "version": STORE_VERSION,
            "methods": self.methods,
            "seed": self.seed,
            "mode": self.mode,
            "ablation": self.ablation,
            "active": self.active,
            "round": self.round,
            "done_in_round": self.done_in_round,
            "history": self.history,
            "clock": self.clock,
            "models": self.models,
            "finished": self.finished,
            "ea": {m: (None if s is None else s.to_dict()) for m, s in self.ea.items()},
        }

    def save(self, directory):
        d = Path(directory)
        (d / "trials").mkdir(parents=True, exist_ok=True)
        (d / "models").mkdir(exist_ok=True)
        for m in self.methods:
            write_jsonl(self.logs[m], d / "trials" / f"{m}.jsonl")
        tmp = d / "store.json.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
        tmp.replace(d / "store.json")

    @classmethod
    def load(cls, directory, task=None):
        d = Path(directory)
        path = d / "store.json"
        if not path.exists():
            raise CheckpointError(f"no store.json in {d}")
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable store.json: {exc}") from exc
        if doc.get("version") != STORE_VERSION:
            raise CheckpointVersionError(f"store version {doc.get('version')} != {STORE_VERSION}")
        s = cls(doc["methods"], doc["seed"], doc["mode"], doc.get("ablation", False))
        s.active = doc["active"]
        s.round = doc["round"]
        s.done_in_round = doc["done_in_round"]
        s.history = doc["history"]
        s.clock = doc["clock"]
        s.models = doc.get("models", {})
        s.finished = doc.get("finished", False)
        for m in s.methods:
            p = d / "trials" / f"{m}.jsonl"
            s.logs[m] = read_jsonl(p) if p.exists() else []
            blob = doc["ea"].get(m)
            if blob is not None:
                if task is None:
                    s.ea[m] = blob
                else:
                    s.ea[m] = EaState.from_dict(blob, _ea_space(task, m, s.ablation))
        return s

    def attach(self, task):
        """Rebuild EA states left as raw documents by ``load(..., task=None)``."""
        for m, blob in self.ea.items():
            if isinstance(blob, dict):
                self.ea[m] = EaState.from_dict(blob, _ea_space(task, m, self.ablation))
        return self


def _ea_space(task, method, ablation):
    space = task.space(method)
    return space.extend(sigma_dimension()) if ablation else space


def _checkpoint(store, directory):
    if directory is not None:
        store.save(directory)


def _save_model(task, store, method, handle, directory):
    if directory is None or handle is None or not hasattr(task, "save_handle"):
        return
    models = Path(directory) / "models"
    models.mkdir(parents=True, exist_ok=True)
    path = task.save_handle(handle, models)
    store.models[method] = path.name


def _n_rounds(n):
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def successive_halving(
    task,
    methods=None,
    B_t=60.0,
    B_i=30,
    workers=1,
    seed=0,
    clock="sim",
    store=None,
    checkpoint_dir=None,
    total_budget_mode=False,
    ablation=False,
    ea_config=None,
    use_prior=True,
    halt_after=None,
    score_test=True,
):
    """Prune methods by halving while giving survivors more search time.

    Every round, each active method continues its joint search for
    ``B_t / n_active`` (or, with ``total_budget_mode``, ``B_t`` split evenly
    over all rounds as well), then the better half (rounded up) survives.
    The store is checkpointed after every method run and every pruning
    step. ``halt_after=(round, k)`` stops right after the ``k``-th method run
    of that round and returns ``None``, for interruption tests.
    """
    check_budget(B_t)
    if store is None:
        methods = list(methods or task.methods)
        if not methods:
            raise ValueError("need at least one method")
        store = ResultStore(methods, seed, "advanced", ablation)
    else:
        store.attach(task)
        ablation = store.ablation
    n_initial = len(store.methods)
    handles = {}
    while not store.finished:
        active = list(store.active)
        if len(active) <= 1 and store.round > 0 and store.history:
            break
        per_method = B_t / len(active)
        if total_budget_mode:
            per_method /= _n_rounds(n_initial)
        for m in active:
            if m in store.done_in_round:
                continue
            idx = store.methods.index(m)
            res = joint_optimize(
                task,
                m,
                per_method,
                B_i=B_i,
                workers=workers,
                seed=derive_seed(store.seed, store.round, idx),
                clock=clock,
                ea_state=store.ea[m] if store.ea[m] is not None else ea_new(_ea_space(task, m, ablation), ea_config, derive_seed(store.seed, 7, idx)),
                use_prior=use_prior,
                time_offset=store.clock,
                round_index=store.round,
                ablation=ablation,
            )
            store.add(m, res.records, res.ea_state)
            store.clock += res.elapsed
            store.done_in_round.append(m)
            if res.best_handle is not None:
                handles[m] = res.best_handle
                _save_model(task, store, m, res.best_handle, checkpoint_dir)
            _checkpoint(store, checkpoint_dir)
            if halt_after is not None and (store.round, len(store.done_in_round)) == tuple(halt_after):
                return None
        store.prune()
        _checkpoint(store, checkpoint_dir)
        if len(store.active) == 1:
            break
    store.finished = True
    _checkpoint(store, checkpoint_dir)
    return _outcome(task, store, "advanced", score_test, handles)


def _winner_handle(task, winner, best, handles):
    """The fitted model behind ``best``, refitted (deterministically) when not in memory."""
    cfg = {k: v for k, v in best.config.items() if k != "sigma"}
    fit_seed = best.meta.get("fit_seed", 0)
    handle = (handles or {}).get(winner)
    if handle is None or handle.seed != fit_seed or jsonable(handle.config) != jsonable(cfg):
        handle = task.fit(winner, cfg, fit_seed)
    return handle


def _outcome(task, store, mode, score_test, handles=None):
    winner = store.ranking(store.active)[0]
    best = store.best(winner)
    if best is None or not best.ok:
        raise RuntimeError(f"winner {winner} has no successful trial")
    test = None
    if score_test:
        handle = _winner_handle(task, winner, best, handles)
        test = task.test_score(handle, best.sigma)
    else:
        handle = (handles or {}).get(winner)
    history = list(store.history)
    history.append({"round": store.round, "active": list(store.active), "bests": {m: store.bests()[m] for m in store.active}, "terminal": True})
    return CashOutcome(
        winner=winner,
        config=dict(best.config),
        sigma=float(best.sigma),
        val_score=float(best.score),
        test_score=None if test is None else float(test),
        history=history,
        bests=store.bests(),
        mode=mode,
        handle=handle,
    )


def autopq_default(task, methods=None, B_i=30, seed=0, checkpoint_dir=None, score_test=True, clock="sim"):
    """Default configurations for every method, inner sigma search with a uniform prior, pick the best."""
    methods = list(methods or task.methods)
    if not methods:
        raise ValueError("need at least one method")
    store = ResultStore(methods, seed, "default")
    handles = {}
    for idx, m in enumerate(methods):
        config = task.default_config(m)
        fit_seed = derive_seed(seed, idx, 0)
        start = time.monotonic()
        handle = task.fit(m, config, fit_seed)
        res = optimize_sigma(task, handle, B_i, None, fit_seed)
        if clock == "sim":
            duration = task.fit_cost(m, config) + res.n_iter * task.sample_cost(m)
        else:
            duration = time.monotonic() - start
        store.clock += duration
        rec = TrialRecord(
            uid=f"{m}-default",
            method=m,
            config=dict(config),
            score=res.score,
            sigma=res.sigma,
            wall_seconds=float(duration),
            timestamp=store.clock,
            round=0,
            inner_iters=res.n_iter,
            meta={"fit_seed": fit_seed, "default": True},
        )
        store.add(m, [rec])
        handles[m] = handle
        _save_model(task, store, m, handle, checkpoint_dir)
    store.finished = True
    outcome = _outcome(task, store, "default", score_test, handles)
    outcome.history = [{"round": 0, "active": list(methods), "bests": store.bests(), "terminal": True}]
    _checkpoint(store, checkpoint_dir)
    return outcome, store


def warm_start_store(default_store, task, seed=None, prune=True, ea_config=None):
    """Turn a finished default-run store into round 0 of successive halving.

    The default records seed each method's EA population; with ``prune``
    the better half is kept before any further search.
    """
    store = ResultStore(default_store.methods, default_store.seed if seed is None else seed, "advanced")
    for idx, m in enumerate(store.methods):
        ea = ea_new(_ea_space(task, m, False), ea_config, derive_seed(store.seed, 7, idx))
        for rec in default_store.logs[m]:
            ea_update(ea, rec, island=0)
        store.add(m, list(default_store.logs[m]), ea)
    store.clock = default_store.clock
    store.models = dict(default_store.models)
    if prune and len(store.methods) > 1:
        store.prune(note="warm start")
    else:
        store.round = 1
    return store
