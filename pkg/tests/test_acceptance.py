"""Acceptance criteria 1-13; each test prints one PASS/FAIL line (also summarised at the end of the run)."""

import math
import time

import numpy as np
import pytest
from scipy.stats import kstest

from autoquant.baselines import conformal_pi
from autoquant.cinn import SamplingConfig, fit_encoder, forward, init_cinn, inverse, mean_nll, nll_and_grads, quantiles_from_point, train_cinn
from autoquant.forecast import PointForecast, QuantileForecast
from autoquant.hpo import PriorStats
from autoquant.metrics import crps_dataset, crps_energy, crps_integral, crps_single, pi_coverage_width, postprocess_nonnegative
from autoquant.orchestrator import (
    ForecastTask,
    ResultStore,
    autopq_default,
    dominance_landscape,
    joint_optimize,
    joint_optimize_ablation,
    optimize_sigma,
    prepare,
    successive_halving,
    train_flow,
    warm_start_store,
)
from autoquant.orchestrator.task import FitHandle, SyntheticLandscape, quadratic_sigma
from autoquant.resources import ResourceLedger, energy_kwh, monetary_cost
from autoquant.synthetic import SyntheticSpec, generate, oracle_crps
from autoquant.synthetic import _cells as oracle_origins

from _helpers import criterion, fd_logdet, randomize

SMALL_FLOW = {"n_blocks": 4, "hidden": 16, "epochs": 30, "cond_dim": 16}


@pytest.fixture(scope="module")
def hetero_task():
    ds, _ = generate(SyntheticSpec("hetero_ar1", length=1500, seed=0))
    p = prepare(ds, 24, 24)
    flow = train_flow(p.train, seed=0, **SMALL_FLOW)
    return p, flow


def linear_gaussian(n, H, C, rng, A=None, L=None):
    c = rng.standard_normal((n, C))
    return c @ A.T + rng.standard_normal((n, H)) @ L.T, c


def test_criterion_01_invertibility():
    with criterion(1, "cINN round trip < 1e-6 over 1000 (y, c), H=24, C=16, trained and untrained, < 10 s"):
        rng = np.random.default_rng(0)
        H, C = 24, 16
        A = 0.3 * rng.standard_normal((H, C))
        L = 0.5 * np.eye(H)
        y_tr, c_tr = linear_gaussian(2000, H, C, rng, A, L)
        trained, _ = train_cinn(fit_encoder(init_cinn(H, C, raw_dim=C, seed=0), c_tr), y_tr, c_tr, epochs=30, lr=1e-3)
        # extra stress case: perturbed weights; much larger perturbations give maps with
        # Jacobian condition numbers above 1e11, beyond what float64 round trips can resolve
        perturbed = randomize(init_cinn(H, C, seed=2), 2, scale=0.05)
        models = {"untrained": init_cinn(H, C, seed=1), "perturbed": perturbed, "trained": trained}
        y = 3 * rng.standard_normal((1000, H))
        c = rng.standard_normal((1000, C))
        t0 = time.perf_counter()
        errs = {}
        for name, m in models.items():
            z, _ = forward(m, y, c)
            errs[name] = float(np.max(np.abs(inverse(m, z, c) - y)))
        elapsed = time.perf_counter() - t0
        print(f"    max round-trip error {errs}, {elapsed:.2f} s")
        assert all(e < 1e-6 for e in errs.values()), errs
        assert elapsed < 10


def test_criterion_02_logdet_and_gradients():
    with criterion(2, "logdet vs finite-difference Jacobian within 1e-4 (H<=6); NLL gradients within 1e-4 relative (H=4)"):
        rng = np.random.default_rng(1)
        worst = 0.0
        for H in range(1, 7):
            m = randomize(init_cinn(H, 3, n_blocks=4, hidden=8, seed=H), H)
            for _ in range(10):
                y, c = rng.standard_normal(H), rng.standard_normal(3)
                worst = max(worst, abs(forward(m, y, c)[1] - fd_logdet(m, y, c, forward)))
        m = randomize(init_cinn(4, 3, n_blocks=3, hidden=6, seed=4), 4)
        y, c = rng.standard_normal((16, 4)), rng.standard_normal((16, 3))
        _, grads = nll_and_grads(m, y, c)
        worst_rel, eps = 0.0, 1e-5
        for k, p in m.params.items():
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + eps
                lp = mean_nll(m, y, c)
                p[idx] = old - eps
                lm = mean_nll(m, y, c)
                p[idx] = old
                num, ana = (lp - lm) / (2 * eps), grads[k][idx]
                # central differences resolve gradients to about 1e-9 absolute
                worst_rel = max(worst_rel, abs(num - ana) / (max(abs(num), abs(ana)) + 1e-8))
        print(f"    max |logdet - FD| = {worst:.2e}; max relative gradient error = {worst_rel:.2e}")
        assert worst < 1e-4
        assert worst_rel < 1e-4


def test_criterion_03_crps_oracle_equivalence():
    with criterion(3, "energy-form CRPS equals step-CDF integral within 1e-10 on 1000 seeded cases; {0,1}/0.5 gives 0.25"):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            M = int(rng.integers(1, 11))
            x = rng.normal(size=M) * rng.uniform(0.1, 10) if rng.random() < 0.7 else rng.integers(-2, 3, size=M).astype(float)
            y = float(rng.normal() * 3) if rng.random() < 0.8 else float(rng.choice(x))
            worst = max(worst, abs(crps_energy(x, y) - crps_integral(x, y)))
        print(f"    max disagreement {worst:.2e}")
        assert worst < 1e-10
        assert crps_single([0.0, 1.0], 0.5) == 0.25
        assert crps_energy(np.array([0.0, 1.0]), 0.5) == 0.25


def test_criterion_04_flow_learning():
    with criterion(4, "trained flow: per-coordinate KS < 0.1 (n=2000); iid N(0,1) NLL within 0.1 H of optimum; < 2 min"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(0)
        H, C = 6, 4
        A = 0.5 * rng.standard_normal((H, C))
        L = np.tril(0.3 * rng.standard_normal((H, H))) + 0.5 * np.eye(H)
        y, c = linear_gaussian(10_000, H, C, np.random.default_rng(10), A, L)
        m, _ = train_cinn(fit_encoder(init_cinn(H, C, raw_dim=C, seed=0), c), y, c, epochs=40, lr=1e-3, seed=0)
        yt, ct = linear_gaussian(2000, H, C, np.random.default_rng(1), A, L)
        z, _ = forward(m, yt, ct)
        ks = [kstest(z[:, j], "norm").statistic for j in range(H)]

        H2 = 24
        y2 = np.random.default_rng(2).standard_normal((4000, H2))
        c2 = np.random.default_rng(3).standard_normal((4000, 4))
        m2, _ = train_cinn(fit_encoder(init_cinn(H2, 4, raw_dim=4), c2), y2, c2, epochs=20, seed=0)
        y2t = np.random.default_rng(4).standard_normal((2000, H2))
        nll = mean_nll(m2, y2t, np.random.default_rng(5).standard_normal((2000, 4)))
        optimum = H2 / 2 * (1 + math.log(2 * math.pi))
        elapsed = time.perf_counter() - t0
        print(f"    KS {np.round(ks, 3).tolist()}; held-out NLL {nll:.3f} vs optimum {optimum:.3f}; {elapsed:.1f} s")
        assert max(ks) < 0.1
        assert abs(nll - optimum) <= 0.1 * H2
        assert elapsed < 120


def test_criterion_05_sigma_behaviour(hetero_task):
    with criterion(5, "sigma=0 spread < 1e-5; mean 10-90 width non-decreasing in sigma (M=500, 5 seeds)"):
        p, flow = hetero_task
        task = ForecastTask(p.train, p.val, p.test, flow, ["ridge_arx"], M=500)
        h = task.fit("ridge_arx", {"alpha": 1.0}, 0)
        cond = p.val.conditions
        spreads, monotone = [], True
        for seed in range(5):
            q0 = quantiles_from_point(flow, h.val_pf, cond, SamplingConfig(0.0, M=500), seed)
            spreads.append(float(np.max(q0.values[..., -1] - q0.values[..., 0])))
            widths = []
            for s in (0.1, 0.5, 1.0, 2.0):
                qf = quantiles_from_point(flow, h.val_pf, cond, SamplingConfig(s, M=500), seed)
                widths.append(pi_coverage_width(qf, p.val.targets, (0.1, 0.9))[1])
            monotone &= all(b >= a for a, b in zip(widths, widths[1:]))
            print(f"    seed {seed}: widths {np.round(widths, 4).tolist()}")
        assert max(spreads) < 1e-5
        assert monotone


def test_criterion_06_prior_speedup():
    with criterion(6, "log-normal prior: median inner iterations <= uniform, win or tie in >= 40/50 seeds, < 1 min"):
        t0 = time.perf_counter()
        task = SyntheticLandscape({"m": quadratic_sigma(sigma0=0.5)})
        h = FitHandle("m", {}, 0)
        prior = PriorStats(math.log(0.5), 0.05, 10)
        with_prior = np.array([optimize_sigma(task, h, 30, prior, s).n_iter for s in range(50)])
        uniform = np.array([optimize_sigma(task, h, 30, None, s).n_iter for s in range(50)])
        wins = int(np.sum(with_prior <= uniform))
        elapsed = time.perf_counter() - t0
        print(f"    median {np.median(with_prior)} vs {np.median(uniform)}; wins or ties {wins}/50; {elapsed:.1f} s")
        assert np.median(with_prior) <= np.median(uniform)
        assert wins >= 40
        assert elapsed < 60


def test_criterion_07_joint_vs_ablation(hetero_task):
    with criterion(7, "joint search mean val CRPS <= single-level ablation on hetero_ar1 / ridge_arx, 10 paired seeds, < 10 min"):
        t0 = time.perf_counter()
        p, flow = hetero_task
        task = ForecastTask(p.train, p.val, p.test, flow, ["ridge_arx"], M=100)
        joint = [joint_optimize(task, "ridge_arx", 20.0, seed=s).best.score for s in range(10)]
        abl = [joint_optimize_ablation(task, "ridge_arx", 20.0, seed=s).best.score for s in range(10)]
        elapsed = time.perf_counter() - t0
        print(f"    joint {np.mean(joint):.5f} vs ablation {np.mean(abl):.5f}; {elapsed:.1f} s")
        assert np.mean(joint) <= np.mean(abl)
        assert elapsed < 600


def test_criterion_08_halving_soundness():
    with criterion(8, "dominant method wins 10/10 seeds; active sizes 9-5-3-2-1"):
        wins, sizes_ok = 0, True
        for seed in range(10):
            winner = seed % 9
            task = dominance_landscape(9, winner=winner, seed=seed)
            out = successive_halving(task, B_t=18.0, seed=seed)
            wins += out.winner == f"m{winner}"
            sizes_ok &= [len(h["active"]) for h in out.history] == [9, 5, 3, 2, 1]
        print(f"    wins {wins}/10; sizes ok {sizes_ok}")
        assert wins == 10 and sizes_ok


@pytest.mark.slow
def test_criterion_09_checkpoint_fidelity(hetero_task, tmp_path):
    with criterion(9, "interrupt and resume mid-round reproduces the uninterrupted outcome bit-identically"):
        p, flow = hetero_task
        methods = ["seasonal_naive", "ridge_arx", "gbt"]

        def task():
            return ForecastTask(p.train, p.val, p.test, flow, methods, M=50, seed=3)

        full = successive_halving(task(), B_t=30.0, B_i=10, seed=3)
        ck = tmp_path / "ck"
        assert successive_halving(task(), B_t=30.0, B_i=10, seed=3, checkpoint_dir=ck, halt_after=(0, 2)) is None
        resumed = successive_halving(task(), B_t=30.0, B_i=10, store=ResultStore.load(ck), checkpoint_dir=ck)
        same_q = np.array_equal(task().quantiles(full.handle, full.sigma, "test").values, task().quantiles(resumed.handle, resumed.sigma, "test").values)
        print(f"    winner {full.winner} / {resumed.winner}; identical forecasts {same_q}")
        assert resumed.to_dict() == full.to_dict()
        assert same_q


def test_criterion_10_conformal_coverage():
    with criterion(10, "Bonferroni conformal joint coverage >= 1 - alpha - 95% binomial bound, alpha in {0.1, 0.2}, 500 windows"):
        rng = np.random.default_rng(0)
        H, n_cal, n_test = 24, 400, 500
        ok = True
        for alpha in (0.1, 0.2):
            cal = np.abs(rng.standard_normal((n_cal, H)))
            pf = PointForecast(np.zeros((n_test, H)), np.arange(n_test))
            q = conformal_pi(pf, cal, alpha)
            y = rng.standard_normal((n_test, H))
            joint = float(np.mean(np.all((q.values[..., 0] <= y) & (y <= q.values[..., 1]), axis=1)))
            bound = 1 - alpha - 1.96 * math.sqrt(alpha * (1 - alpha) / n_test)
            print(f"    alpha {alpha}: coverage {joint:.3f} >= {bound:.3f}")
            ok &= joint >= bound
        assert ok


@pytest.mark.slow
def test_criterion_11_end_to_end():
    with criterion(11, "hetero_ar1 4000/H=24: default test CRPS <= 1.25 oracle; warm-started halving val <= default in >= 4/5 seeds; < 15 min"):
        t0 = time.perf_counter()
        methods = ["seasonal_naive", "ridge_arx", "gbt", "mlp"]
        ratios, improved = [], 0
        for seed in range(5):
            ds, handle = generate(SyntheticSpec("hetero_ar1", length=4000, seed=seed))
            p = prepare(ds, 24, 24)
            np.testing.assert_array_equal(p.test.origins, oracle_origins(handle, "test", 24, 24))
            task = ForecastTask(p.train, p.val, p.test, train_flow(p.train, seed=seed), methods, M=100, seed=seed)
            default, dstore = autopq_default(task, methods, B_i=30, seed=seed)
            oracle = oracle_crps(handle, "test", exact=True, scale=p.normalizer.scale["target"])[0]
            ratios.append(default.test_score / oracle)
            adv = successive_halving(task, B_t=120.0, B_i=30, seed=seed, store=warm_start_store(dstore, task))
            improved += adv.val_score <= default.val_score
            print(f"    seed {seed}: default {default.winner} test {default.test_score:.4f} / oracle {oracle:.4f} = {ratios[-1]:.3f}; "
                  f"advanced {adv.winner} val {adv.val_score:.4f} vs {default.val_score:.4f}")
        elapsed = time.perf_counter() - t0
        print(f"    {elapsed:.0f} s")
        assert max(ratios) <= 1.25
        assert improved >= 4
        assert elapsed < 900


def test_criterion_12_resource_arithmetic():
    with criterion(12, "20.45 h x 3.468 $/h = 70.92 $; 4.22 h at calibrated power = 0.57 kWh"):
        cost = monetary_cost(ResourceLedger(price_model={"per_hour": 3.468}), billed_hours=20.45)
        kwh = energy_kwh(ResourceLedger().record("default", 4.22 * 3600))
        print(f"    {cost:.4f} $, {kwh:.4f} kWh")
        assert round(cost, 2) == 70.92 and round(cost, 1) == 70.9
        assert round(kwh, 2) == 0.57


def test_criterion_13_clamping():
    with criterion(13, "clamping at zero never increases dataset CRPS for non-negative truth (200 forecasts)"):
        worse = 0
        lv = np.linspace(0.05, 0.95, 19)
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n, H, M = 5, 4, 50
            samples = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), size=(n, H, M))
            y = np.abs(rng.normal(size=(n, H))) * rng.choice([0.0, 1.0], size=(n, H), p=[0.2, 0.8])
            qv = np.quantile(samples, lv, axis=-1).transpose(1, 2, 0)
            for qf in (QuantileForecast(qv, lv, np.arange(n), samples=samples), QuantileForecast(qv, lv, np.arange(n))):
                worse += crps_dataset(postprocess_nonnegative(qf), y).value > crps_dataset(qf, y).value
        print(f"    forecasts made worse: {worse} of 400 checks")
        assert worse == 0
