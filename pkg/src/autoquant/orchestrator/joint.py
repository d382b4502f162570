"""Nested joint search: an island EA over forecaster configurations with an
inner TPE search over the sampling std, plus the single-level ablation."""

from __future__ import annotations

import heapq
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EmptyPopulation
from ..hpo import EaConfig, EarlyStopper, TrialRecord, ea_new, ea_suggest, ea_update, population_best, prior_stats
from ..hpo.tpe import tpe_new, tpe_suggest, tpe_update
from ..space import sigma_dimension
from .task import check_budget

CLOCKS = ("sim", "wall")


def derive_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class SigmaResult:
    sigma: float
    score: float
    n_iter: int
    history: list = field(default_factory=list)
    stopped_early: bool = False


def optimize_sigma(task, handle, B_i=30, prior=None, seed=0, early_stopping=True, tpe_options=None):
    """Inner loop: TPE over ``sigma`` until the plateau rule fires or ``B_i`` evaluations.

    Returns the best evaluated ``(sigma, score)``; ties go to the earlier one.
    """
    if B_i < 1:
        raise ValueError("inner budget must be at least one evaluation")
    state = tpe_new(prior=prior, seed=seed, **(tpe_options or {}))
    stopper = EarlyStopper()
    best = None
    history = []
    stopped = False
    for _ in range(int(B_i)):
        sigma = tpe_suggest(state)
        q = float(task.score(handle, sigma))
        tpe_update(state, sigma, q)
        history.append((sigma, q))
        if best is None or q < best[1]:
            best = (sigma, q)
        if stopper.update(q) and early_stopping:
            stopped = True
            break
    return SigmaResult(best[0], best[1], len(history), history, stopped)


@dataclass
class JointResult:
    best: TrialRecord
    records: list
    ea_state: object
    elapsed: float
    lane_seconds: list
    best_handle: object = None


class _Runner:
    """Shared state of one joint-search call."""

    def __init__(self, task, method, B_t, B_i, seed, clock, ea_state, use_prior, time_offset, round_index, ablation, tpe_options, uid_prefix):
        self.task, self.method = task, method
        self.B_t, self.B_i, self.seed = float(B_t), int(B_i), int(seed)
        self.clock, self.ea, self.use_prior = clock, ea_state, use_prior
        self.offset, self.round = float(time_offset), int(round_index)
        self.ablation, self.tpe_options = ablation, tpe_options
        self.prefix = uid_prefix or f"{method}-r{round_index}"
        self.records = []
        self.best_handle = None
        self.best_key = None
        self.lock = threading.Lock()
        self.t0 = time.monotonic()

    def _prior(self):
        if not self.use_prior:
            return None
        with self.ea.lock:
            recs = self.ea.records()
        try:
            return prior_stats(recs)
        except EmptyPopulation:
            return None

    def run_trial(self, lane, n):
        """Evaluate one outer trial; returns ``(record, duration, handle)`` without publishing it."""
        task, method = self.task, self.method
        trial_seed = derive_seed(self.seed, lane, n)
        config = ea_suggest(self.ea, island=lane)
        start = time.monotonic()
        handle, sigma, score, iters, status, meta = None, None, math.inf, 0, "ok", {"fit_seed": trial_seed}
        fit_config = {k: v for k, v in config.items() if k != "sigma"}
        try:
            handle = task.fit(method, fit_config, trial_seed)
            if self.ablation:
                sigma = float(config["sigma"])
                score = float(task.score(handle, sigma))
                iters = 1
            else:
                res = optimize_sigma(task, handle, self.B_i, self._prior(), trial_seed, tpe_options=self.tpe_options)
                sigma, score, iters = res.sigma, res.score, res.n_iter
                meta["stopped_early"] = res.stopped_early
            if not math.isfinite(score):
                raise FloatingPointError(f"non-finite score {score}")
        except Exception as exc:  # a failed trial never stops the search
            status, score, meta["error"] = "failed", math.inf, f"{type(exc).__name__}: {exc}"
        if self.clock == "sim":
            duration = task.fit_cost(method, fit_config) + iters * task.sample_cost(method)
        else:
            duration = time.monotonic() - start
        rec = TrialRecord(
            uid=f"{self.prefix}-w{lane}-{n}",
            method=method,
            config=config,
            score=score,
            sigma=sigma,
            wall_seconds=float(duration),
            worker=lane,
            island=lane % len(self.ea.islands),
            status=status,
            inner_iters=iters,
            round=self.round,
            meta=meta,
        )
        return rec, duration, handle

    def publish(self, rec, handle):
        ea_update(self.ea, rec, island=rec.island)
        with self.lock:
            self.records.append(rec)
            key = (rec.score, rec.timestamp)
            if rec.ok and (self.best_key is None or key < self.best_key):
                self.best_key, self.best_handle = key, handle

    @staticmethod
    def keep_going(b_t, durations, B_t):
        """Stop once the lane budget is spent or the next trial is projected to overrun it."""
        if b_t >= B_t:
            return False
        if durations and b_t + float(np.mean(durations)) > B_t:
            return False
        return True


def _run_sim(r, workers):
    """Deterministic discrete-event schedule of ``workers`` asynchronous lanes."""
    queue = [(0.0, 1, w, None) for w in range(workers)]
    heapq.heapify(queue)
    b_t = [0.0] * workers
    durs = [[] for _ in range(workers)]
    count = [0] * workers
    end = [0.0] * workers
    while queue:
        t, kind, w, payload = heapq.heappop(queue)
        if kind == 0:  # finish: publish, then the lane may start again at the same instant
            rec, d, handle = payload
            rec.timestamp = r.offset + t
            r.publish(rec, handle)
            b_t[w] += d
            durs[w].append(d)
            end[w] = t
            heapq.heappush(queue, (t, 1, w, None))
        elif _Runner.keep_going(b_t[w], durs[w], r.B_t):
            rec, d, handle = r.run_trial(w, count[w])
            count[w] += 1
            heapq.heappush(queue, (t + d, 0, w, (rec, d, handle)))
    return max(end), b_t


def _run_wall(r, workers):
    b_t = [0.0] * workers

    def lane(w):
        durs, n = [], 0
        while _Runner.keep_going(b_t[w], durs, r.B_t):
            rec, d, handle = r.run_trial(w, n)
            n += 1
            rec.timestamp = r.offset + (time.monotonic() - r.t0)
            r.publish(rec, handle)
            b_t[w] += d
            durs.append(d)
        return n

    results = run_pool([lambda w=w: lane(w) for w in range(workers)], workers)
    for res in results:
        if isinstance(res, WorkerPanic):
            raise res.error
    return time.monotonic() - r.t0, b_t


def joint_optimize(
    task,
    method,
    B_t,
    B_i=30,
    workers=1,
    seed=0,
    clock="sim",
    ea_state=None,
    ea_config=None,
    use_prior=True,
    time_offset=0.0,
    round_index=0,
    ablation=False,
    tpe_options=None,
    uid_prefix=None,
):
    """Joint search of forecaster configuration and sampling std for one method.

    Each of ``workers`` lanes repeatedly asks the shared EA for a
    configuration, fits it, runs the inner sigma search (seeded with the
    population's log-normal prior statistics) and reports back, until its
    consumed time reaches ``B_t``. With ``ablation=True`` the EA searches
    ``sigma`` as one more dimension and each trial evaluates a single
    ``sigma`` (no inner loop, no prior).

    Parameters
    ----------
    clock : {'sim', 'wall'}
        ``'sim'`` charges the task's declared costs and schedules lanes as a
        deterministic discrete-event simulation; ``'wall'`` measures real
        time with worker threads.
    ea_state : EaState, optional
        Resume the search from an earlier population.
    """
    check_budget(B_t)
    if workers < 1:
        raise ValueError("need at least one worker")
    if clock not in CLOCKS:
        raise ValueError(f"clock must be one of {CLOCKS}")
    if ea_state is None:
        space = task.space(method)
        if ablation:
            space = space.extend(sigma_dimension())
        ea_state = ea_new(space, ea_config, derive_seed(seed, 7))
    r = _Runner(task, method, B_t, B_i, seed, clock, ea_state, use_prior and not ablation, time_offset, round_index, ablation, tpe_options, uid_prefix)
    elapsed, lanes = (_run_sim if clock == "sim" else _run_wall)(r, int(workers))
    records = sorted(r.records, key=lambda x: (x.timestamp, x.worker))
    best = population_best(records, 1)[0]
    return JointResult(best, records, ea_state, float(elapsed), lanes, r.best_handle)


def joint_optimize_ablation(task, method, B_t, **kwargs):
    """Single-level search: EA proposes ``(config, sigma)`` and each trial evaluates one ``sigma``."""
    kwargs["ablation"] = True
    return joint_optimize(task, method, B_t, **kwargs)


class WorkerPanic:
    """Result slot of a pool task that raised."""

    def __init__(self, error):
        self.error = error

    def __repr__(self):
        return f"WorkerPanic({self.error!r})"


def run_pool(tasks, workers=1):
    """Run callables on ``workers`` threads; results come back in submission order.

    An exception is captured as a :class:`WorkerPanic` in its own slot and
    never affects the other tasks.
    """
    if workers < 1:
        raise ValueError("need at least one worker")

    def guard(fn):
        try:
            return fn()
        except Exception as exc:
            return WorkerPanic(exc)

    if workers == 1:
        return [guard(fn) for fn in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guard, tasks))
