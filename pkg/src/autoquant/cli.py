"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
error, 4 checkpoint error (missing, unreadable or incompatible version).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import forecasters
from .cinn import DEFAULT_LEVELS, CinnModel
from .data import FeatureSpec, load_csv, split_dataset, write_csv
from .exceptions import AutoquantError, CheckpointError, ConfigError, DataError, LevelMissing, ShapeMismatch
from .forecast import QuantileForecast, read_quantile_csv
from .metrics import crps_dataset, crps_energy, pi_coverage_width, pinball
from .orchestrator import (
    ForecastTask,
    ResultStore,
    autopq_default,
    prepare,
    successive_halving,
    train_flow,
    warm_start_store,
)
from .resources import DEFAULT_WATTS, ResourceLedger
from .synthetic import SyntheticSpec, generate

log = logging.getLogger("autoquant")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME, EXIT_CHECKPOINT = 0, 1, 2, 3, 4
MODES = ("default", "advanced", "ablation")
CLOCKS = ("wall", "sim")
CONFIG_KEYS = {
    "dataset", "synthetic", "split_bounds", "split_fractions", "H", "H1", "features", "methods", "mode",
    "budget", "workers", "seed", "cinn", "sampling", "power_model", "price_model", "output_dir", "halt_after",
}


@dataclass
class RunConfig:
    """Validated run configuration (one JSON document)."""

    dataset: dict | None = None
    synthetic: dict | None = None
    split_bounds: tuple | None = None
    split_fractions: tuple = (0.7, 0.85)
    H: int = 24
    H1: int = 24
    features: dict = field(default_factory=dict)
    methods: tuple = tuple(forecasters.REGISTRY)
    mode: str = "default"
    B_t: float = 3600.0
    B_i: int = 30
    total_budget_mode: bool = False
    clock: str = "wall"
    workers: int = 4
    seed: int = 0
    cinn: dict = field(default_factory=dict)
    M: int = 100
    levels: tuple = DEFAULT_LEVELS
    power_model: dict = field(default_factory=lambda: {"cpu": DEFAULT_WATTS})
    price_model: dict | None = None
    output_dir: str = "autoquant-out"
    halt_after: tuple | None = None

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        if ("dataset" in d) == ("synthetic" in d):
            raise ConfigError("give exactly one of 'dataset' or 'synthetic'")
        cfg = cls()
        if "dataset" in d:
            ds = d["dataset"]
            ds = {"path": ds} if isinstance(ds, str) else dict(ds)
            if "path" not in ds:
                raise ConfigError("dataset needs a 'path'")
            p = Path(ds["path"])
            ds["path"] = str(p if p.is_absolute() else Path(base_dir) / p)
            cfg.dataset = ds
        else:
            cfg.synthetic = dict(d["synthetic"])
        if "split_bounds" in d:
            cfg.split_bounds = tuple(int(x) for x in d["split_bounds"])
        if "split_fractions" in d:
            cfg.split_fractions = tuple(float(x) for x in d["split_fractions"])
        cfg.H, cfg.H1 = int(d.get("H", 24)), int(d.get("H1", 24))
        if cfg.H < 1 or cfg.H1 < 0:
            raise ConfigError("need H >= 1 and H1 >= 0")
        cfg.features = dict(d.get("features") or {})
        methods = d.get("methods", list(forecasters.REGISTRY))
        if not methods:
            raise ConfigError("method list is empty")
        for m in methods:
            if m not in forecasters.REGISTRY:
                raise ConfigError(f"unknown method {m!r}; registered: {sorted(forecasters.REGISTRY)}")
        cfg.methods = tuple(methods)
        cfg.mode = d.get("mode", "default")
        if cfg.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        budget = dict(d.get("budget") or {})
        cfg.B_t = budget.get("B_t", cfg.B_t)
        cfg.B_i = int(budget.get("B_i", cfg.B_i))
        cfg.total_budget_mode = bool(budget.get("total_budget_mode", False))
        cfg.clock = budget.get("clock", "wall")
        if cfg.clock not in CLOCKS:
            raise ConfigError(f"clock must be one of {CLOCKS}")
        if not (isinstance(cfg.B_t, (int, float)) and cfg.B_t > 0):
            raise ConfigError(f"time budget B_t must be positive, got {cfg.B_t!r}")
        if cfg.B_i < 1:
            raise ConfigError("inner budget B_i must be at least 1")
        cfg.workers = int(d.get("workers", 4))
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
        cfg.seed = int(d.get("seed", 0))
        cfg.cinn = dict(d.get("cinn") or {})
        sampling = dict(d.get("sampling") or {})
        cfg.M = int(sampling.get("M", 100))
        cfg.levels = tuple(float(x) for x in sampling.get("levels", DEFAULT_LEVELS))
        if "power_model" in d:
            cfg.power_model = d["power_model"]
        cfg.price_model = d.get("price_model")
        cfg.output_dir = str(Path(base_dir) / d.get("output_dir", cfg.output_dir))
        if d.get("halt_after") is not None:
            cfg.halt_after = tuple(int(x) for x in d["halt_after"])
        return cfg


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from None
    return RunConfig.from_dict(doc, base_dir=path.parent)


def _resolve_seed(cfg, cli_seed):
    env = os.environ.get("AUTOQUANT_SEED")
    if cli_seed is not None:
        cfg.seed = int(cli_seed)
    elif env is not None:
        try:
            cfg.seed = int(env)
        except ValueError:
            raise ConfigError(f"AUTOQUANT_SEED must be an integer, got {env!r}") from None
    return cfg


def load_dataset(cfg):
    if cfg.synthetic is not None:
        ds, _ = generate(SyntheticSpec.from_dict(cfg.synthetic))
        if cfg.split_bounds is None:
            return ds  # the generator's own split fractions apply
    else:
        ds = load_csv(cfg.dataset["path"], cfg.dataset.get("schema"))
    if cfg.split_bounds is not None:
        return split_dataset(ds, cfg.split_bounds)
    a, b = cfg.split_fractions
    n = len(ds)
    return split_dataset(ds, (int(a * n) - 1, int(b * n) - 1))


def _ledger(cfg):
    return ResourceLedger(power_model=cfg.power_model, price_model=cfg.price_model)


def _flow(cfg, prepared, ckpt, reuse_from=None):
    """Train the flow, or reload it from ``reuse_from/cinn.json``; always saved into ``ckpt``."""
    if reuse_from is not None and (Path(reuse_from) / "cinn.json").exists():
        model = CinnModel.load(Path(reuse_from) / "cinn.json")
    else:
        model = train_flow(prepared.train, seed=cfg.seed, **cfg.cinn)
    ckpt.mkdir(parents=True, exist_ok=True)
    model.save(ckpt / "cinn.json")
    return model


def _raw_units(prepared, qf, y):
    norm = prepared.normalizer
    if norm is None:
        return qf, y
    samples = None if qf.samples is None else norm.invert(qf.samples)
    return QuantileForecast(norm.invert(qf.values), qf.levels, qf.origins, qf.origin_times, samples), norm.invert(y)


def write_truth_csv(path, origin_times, y):
    """Long-format ``origin_timestamp,h,value`` rows, the truth format read by ``evaluate``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["origin_timestamp", "h", "value"])
        for i, t in enumerate(origin_times):
            for h in range(y.shape[1]):
                w.writerow([str(t), h + 1, repr(float(y[i, h]))])


def _write_outputs(cfg, prepared, task, outcome, ledger, out, deterministic):
    out.mkdir(parents=True, exist_ok=True)
    handle = outcome.handle
    if handle is None:
        best_cfg = {k: v for k, v in outcome.config.items() if k != "sigma"}
        handle = task.fit(outcome.winner, best_cfg, 0)
    metrics = {
        "mode": outcome.mode,
        "winner": outcome.winner,
        "config": outcome.config,
        "sigma": outcome.sigma,
        "seed": cfg.seed,
        "units": "crps values without the _raw suffix are in normalised target units",
        "val_crps": outcome.val_score,
        "test_crps": outcome.test_score,
        "bests": outcome.bests,
        "history": outcome.history,
    }
    for split in ("val", "test"):
        windows = getattr(task, split)
        if windows is None or not len(windows):
            continue
        qf = task.quantiles(handle, outcome.sigma, split)
        raw_qf, raw_y = _raw_units(prepared, qf, windows.targets)
        raw_qf.to_csv(out / f"quantiles_{split}.csv")
        write_truth_csv(out / f"truth_{split}.csv", windows.origin_times, raw_y)
        metrics[f"{split}_crps_raw"] = crps_dataset(raw_qf, raw_y).value
        if 0.1 in qf.levels and 0.9 in qf.levels:
            cov, width = pi_coverage_width(qf, windows.targets, (0.1, 0.9))
            metrics[f"{split}_coverage@0.1:0.9"] = cov
            metrics[f"{split}_width@0.1:0.9"] = width
        metrics[f"n_{split}"] = int(windows.targets.size)
    if not deterministic:
        metrics["generated_at"] = dt.datetime.now(dt.timezone.utc).isoformat()
        metrics["wall_hours"] = ledger.total_hours
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ledger.to_json(out / "ledger.json")


def cmd_fit(args, advanced):
    cfg = _resolve_seed(load_config(args.config), args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be at least 1")
        cfg.workers = args.workers
    if not advanced and cfg.mode != "default":
        log.info("fit-default ignores mode %r", cfg.mode)
    if advanced and cfg.mode == "default":
        cfg.mode = "advanced"
    out = Path(cfg.output_dir)
    ckpt = out / "checkpoint"
    ledger = _ledger(cfg)

    t0 = time.monotonic()
    ds = load_dataset(cfg)
    prepared = prepare(ds, cfg.H1, cfg.H, FeatureSpec.from_dict(cfg.features))
    ledger.record("prepare", time.monotonic() - t0)

    resume = getattr(args, "resume", None)
    warm = getattr(args, "warm_start", None)
    if resume is not None:
        ckpt = Path(resume)
        store = ResultStore.load(ckpt)
    t0 = time.monotonic()
    flow = _flow(cfg, prepared, ckpt, reuse_from=resume or warm)
    ledger.record("cinn", time.monotonic() - t0)
    task = ForecastTask(prepared.train, prepared.val, prepared.test, flow, cfg.methods, cfg.M, cfg.levels, cfg.seed)

    t0 = time.monotonic()
    if not advanced:
        outcome, _ = autopq_default(task, cfg.methods, cfg.B_i, cfg.seed, ckpt, clock=cfg.clock)
    else:
        if resume is None:
            if warm is not None:
                default_store = ResultStore.load(warm)
                missing = set(cfg.methods) - set(default_store.methods)
                if missing:
                    raise ConfigError(f"warm-start checkpoint lacks methods {sorted(missing)}")
                store = warm_start_store(default_store, task, seed=cfg.seed)
            else:
                store = ResultStore(cfg.methods, cfg.seed, "advanced", cfg.mode == "ablation")
        outcome = successive_halving(
            task,
            B_t=cfg.B_t,
            B_i=cfg.B_i,
            workers=cfg.workers,
            seed=cfg.seed,
            clock=cfg.clock,
            store=store,
            checkpoint_dir=ckpt,
            total_budget_mode=cfg.total_budget_mode,
            halt_after=cfg.halt_after if resume is None else None,
        )
        if outcome is None:
            ledger.record("search", time.monotonic() - t0)
            ledger.to_json(ckpt / "ledger.json")
            print(f"halted after {cfg.halt_after}; resume with --resume {ckpt}")
            return EXIT_OK
    ledger.record("search", time.monotonic() - t0)
    ledger.to_json(ckpt / "ledger.json")
    _write_outputs(cfg, prepared, task, outcome, ledger, out, args.deterministic_output)
    print(json.dumps({"winner": outcome.winner, "val_crps": outcome.val_score, "test_crps": outcome.test_score}))
    return EXIT_OK


# evaluate -------------------------------------------------------------------

def _parse_metrics(spec):
    out = []
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        name, _, arg = tok.partition("@")
        if name == "crps" and not arg:
            out.append(("crps", None))
        elif name == "pinball" and arg:
            out.append(("pinball", float(arg)))
        elif name == "coverage" and arg.count(":") == 1:
            lo, hi = (float(x) for x in arg.split(":"))
            out.append(("coverage", (lo, hi)))
        else:
            raise ConfigError(f"cannot parse metric {tok!r}; use crps, pinball@L or coverage@LO:HI")
    if not out:
        raise ConfigError("no metrics requested")
    return out


def read_truth_csv(path):
    """Long-format ``origin_timestamp,h,value`` rows."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"truth file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("origin_timestamp", "h", "value"):
            if col not in (reader.fieldnames or []):
                raise DataError(f"truth CSV lacks column {col!r}")
        rows = list(reader)
    try:
        stamps = sorted({np.datetime64(r["origin_timestamp"], "s") for r in rows})
        H = max(int(r["h"]) for r in rows)
        y = np.full((len(stamps), H), np.nan)
        si = {s: i for i, s in enumerate(stamps)}
        for r in rows:
            y[si[np.datetime64(r["origin_timestamp"], "s")], int(r["h"]) - 1] = float(r["value"])
    except (ValueError, TypeError) as exc:
        raise DataError(f"malformed truth CSV: {exc}") from None
    if np.isnan(y).any():
        raise DataError("truth CSV is missing (origin, h) cells")
    return np.array(stamps, dtype="datetime64[s]"), y


def read_sample_csv(path):
    """Long-format ``origin_timestamp,h,sample,value`` rows into ``(stamps, samples[n, H, M])``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    try:
        stamps = sorted({np.datetime64(r["origin_timestamp"], "s") for r in rows})
        H = max(int(r["h"]) for r in rows)
        M = max(int(r["sample"]) for r in rows) + 1
        s = np.full((len(stamps), H, M), np.nan)
        si = {t: i for i, t in enumerate(stamps)}
        for r in rows:
            s[si[np.datetime64(r["origin_timestamp"], "s")], int(r["h"]) - 1, int(r["sample"])] = float(r["value"])
    except (ValueError, TypeError, KeyError) as exc:
        raise DataError(f"malformed sample CSV: {exc}") from None
    if np.isnan(s).any():
        raise DataError("sample CSV is missing (origin, h, sample) cells")
    return np.array(stamps, dtype="datetime64[s]"), s


def _header(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"forecast file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh), [])


def evaluate_files(forecast_path, truth_path, metric_spec):
    metrics = _parse_metrics(metric_spec)
    t_stamps, y = read_truth_csv(truth_path)
    header = [h.strip() for h in _header(forecast_path)]
    if "sample" in header:
        f_stamps, samples = read_sample_csv(forecast_path)
        qf = None
    else:
        qf = read_quantile_csv(forecast_path)
        f_stamps, samples = qf.origin_times, None
    if len(f_stamps) != len(t_stamps) or np.any(f_stamps != t_stamps):
        raise ShapeMismatch("forecast and truth origins differ")
    cells = samples.shape[:2] if samples is not None else qf.values.shape[:2]
    if cells != y.shape:
        raise ShapeMismatch(f"forecast cells {cells} vs truth {y.shape}")
    result = {"n": int(y.size)}
    for name, arg in metrics:
        if name == "crps":
            if samples is not None:
                result["crps"] = float(crps_energy(samples, y).mean())
            else:
                result["crps"] = crps_dataset(qf, y).value
            continue
        if qf is None:
            lv = np.asarray(DEFAULT_LEVELS)
            qf = QuantileForecast(np.quantile(samples, lv, axis=-1, method="hazen").transpose(1, 2, 0), lv, np.arange(len(y)), f_stamps)
        if name == "pinball":
            result[f"pinball@{arg:g}"] = float(np.mean(pinball(qf.quantile(arg), arg, y)))
        else:
            cov, width = pi_coverage_width(qf, y, arg)
            result[f"coverage@{arg[0]:g}:{arg[1]:g}"] = cov
            result[f"width@{arg[0]:g}:{arg[1]:g}"] = width
    return result


def cmd_evaluate(args):
    try:
        result = evaluate_files(args.forecast, args.truth, args.metrics)
    except LevelMissing as exc:
        raise DataError(str(exc)) from None
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


# report ---------------------------------------------------------------------

def _checkpoint_dir(path):
    p = Path(path)
    if (p / "checkpoint" / "store.json").exists():
        return p / "checkpoint"
    return p


def build_report(directory, out=None):
    ckpt = _checkpoint_dir(directory)
    store = ResultStore.load(ckpt)
    out = Path(out) if out is not None else ckpt.parent / "report" if ckpt.name == "checkpoint" else ckpt / "report"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "round", "uid", "cumulative_seconds", "score", "best_so_far", "sigma", "status"])
        for m in store.methods:
            best = np.inf
            for r in sorted(store.logs[m], key=lambda r: (r.timestamp, r.uid)):
                best = min(best, r.score)
                w.writerow([m, r.round, r.uid, repr(r.timestamp), repr(r.score), repr(best), r.sigma, r.status])
    with open(out / "pruning.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "n_active", "active", "bests"])
        entries = list(store.history)
        for e in entries:
            w.writerow([e["round"] + 1, len(e["active"]), " ".join(e["active"]), json.dumps(e["bests"], sort_keys=True)])
        if store.finished or len(store.active) == 1:
            bests = store.bests()
            w.writerow(["terminal", len(store.active), " ".join(store.active), json.dumps({m: bests[m] for m in store.active}, sort_keys=True)])
    ledger_path = ckpt / "ledger.json"
    if ledger_path.exists():
        with open(ledger_path) as fh:
            ledger = ResourceLedger.from_dict(json.load(fh))
    else:
        ledger = ResourceLedger()
        ledger.record("search", store.clock)
    ledger.to_json(out / "resources.json")
    return out


def cmd_report(args):
    out = build_report(args.dir, args.output)
    print(str(out))
    return EXIT_OK


def cmd_synth(args):
    try:
        spec = SyntheticSpec.from_json(args.spec)
    except FileNotFoundError:
        raise ConfigError(f"spec file not found: {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec is not valid JSON: {exc}") from None
    ds, _ = generate(spec)
    write_csv(ds, args.output)
    print(str(args.output))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="autoquant", description="Quantile forecasts from point forecasters with automated selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", required=True, help="run configuration JSON")
        sp.add_argument("--seed", type=int, default=None, help="overrides AUTOQUANT_SEED and the config seed")
        sp.add_argument("--workers", type=int, default=None, help="parallel trials (default 4)")
        sp.add_argument("--deterministic-output", action="store_true", help="omit timestamps and durations from metrics.json")

    fd = sub.add_parser("fit-default", help="default configurations plus sampling-std search")
    common(fd)
    fa = sub.add_parser("fit-advanced", help="successive halving over joint searches")
    common(fa)
    fa.add_argument("--warm-start", metavar="DIR", default=None, help="checkpoint of a default run")
    fa.add_argument("--resume", metavar="DIR", default=None, help="checkpoint to continue")
    ev = sub.add_parser("evaluate", help="score a forecast CSV against truth")
    ev.add_argument("-f", "--forecast", required=True)
    ev.add_argument("-t", "--truth", required=True)
    ev.add_argument("-m", "--metrics", default="crps")
    ev.add_argument("-o", "--output", default=None)
    rp = sub.add_parser("report", help="plot-ready CSV/JSON from a checkpoint")
    rp.add_argument("dir")
    rp.add_argument("-o", "--output", default=None)
    sy = sub.add_parser("synth", help="write a synthetic dataset CSV")
    sy.add_argument("--spec", required=True)
    sy.add_argument("-o", "--output", required=True)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "fit-default": lambda a: cmd_fit(a, advanced=False),
        "fit-advanced": lambda a: cmd_fit(a, advanced=True),
        "evaluate": cmd_evaluate,
        "report": cmd_report,
        "synth": cmd_synth,
    }
    try:
        return handlers[args.command](args)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AutoquantError, Exception) as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
