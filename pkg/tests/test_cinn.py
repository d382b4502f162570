import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm
from sklearn.base import clone

from autoquant.cinn import (
    CINN,
    CinnModel,
    SamplingConfig,
    forward,
    init_cinn,
    inverse,
    mean_nll,
    nll_and_grads,
    quantiles_from_point,
    train_cinn,
)
from autoquant.exceptions import DimMismatch, InvalidDims, NonFiniteLoss, UntrainedModel
from autoquant.forecast import PointForecast

from _helpers import fd_logdet, randomize


def test_zero_init_is_identity():
    m = init_cinn(6, 3, seed=1)
    rng = np.random.default_rng(0)
    y, c = rng.standard_normal((10, 6)), rng.standard_normal((10, 3))
    z, ld = forward(m, y, c)
    np.testing.assert_array_equal(z, y)
    np.testing.assert_array_equal(ld, 0.0)
    np.testing.assert_array_equal(inverse(m, y, c), y)


def test_odd_horizon_pads_one_channel():
    m = init_cinn(1, 2)
    assert m.H_pad == 2
    r = randomize(m)
    z, _ = forward(r, np.array([0.7]), np.array([0.1, -0.3]))
    assert z.shape == (1,)
    assert inverse(r, z, np.array([0.1, -0.3]))[0] == pytest.approx(0.7, abs=1e-12)


@pytest.mark.parametrize("kwargs", [{"n_blocks": 0}, {"H": 0}, {"alpha": 0.0}])
def test_invalid_dims(kwargs):
    args = {"H": 4, "C": 2} | kwargs
    with pytest.raises(InvalidDims):
        init_cinn(**args)


def test_wrong_condition_length():
    m = init_cinn(4, 3)
    with pytest.raises(DimMismatch):
        forward(m, np.zeros(4), np.zeros(2))
    with pytest.raises(DimMismatch):
        inverse(m, np.zeros(4), np.zeros(5))


@given(st.integers(1, 7), st.integers(0, 4), st.integers(1, 4), st.integers(0, 2**16))
def test_round_trip_property(H, C, n_blocks, seed):
    m = randomize(init_cinn(H, C, n_blocks=n_blocks, hidden=8, seed=seed), seed, scale=0.5)
    rng = np.random.default_rng(seed)
    y, c = 2 * rng.standard_normal((20, H)), rng.standard_normal((20, C))
    z, _ = forward(m, y, c)
    assert np.max(np.abs(inverse(m, z, c) - y)) < 1e-9
    assert np.max(np.abs(forward(m, inverse(m, y, c), c)[0] - y)) < 1e-9


@pytest.mark.parametrize("H", [2, 3, 4, 5, 6])
def test_logdet_matches_finite_differences(H):
    m = randomize(init_cinn(H, 2, n_blocks=4, hidden=8, seed=H), H)
    rng = np.random.default_rng(H)
    for _ in range(5):
        y, c = rng.standard_normal(H), rng.standard_normal(2)
        assert forward(m, y, c)[1] == pytest.approx(fd_logdet(m, y, c, forward), abs=1e-4)


def test_clamp_bounds_logdet():
    m = randomize(init_cinn(4, 1, n_blocks=3, hidden=4, alpha=0.5), scale=50.0)
    _, ld = forward(m, 10 * np.random.default_rng(0).standard_normal((50, 4)), np.ones((50, 1)))
    # each block scales d2 = 2 channels with |s| <= alpha
    assert np.all(np.abs(ld) <= 3 * 2 * 0.5 + 1e-12)


def test_nll_gradients_match_central_differences():
    m = randomize(init_cinn(4, 2, n_blocks=2, hidden=5, seed=3), 3)
    rng = np.random.default_rng(3)
    y, c = rng.standard_normal((7, 4)), rng.standard_normal((7, 2))
    _, grads = nll_and_grads(m, y, c)
    eps = 1e-6
    for k, p in m.params.items():
        for idx in list(np.ndindex(p.shape))[:12]:
            old = p[idx]
            p[idx] = old + eps
            lp = mean_nll(m, y, c)
            p[idx] = old - eps
            lm = mean_nll(m, y, c)
            p[idx] = old
            num = (lp - lm) / (2 * eps)
            assert abs(num - grads[k][idx]) <= 1e-4 * max(1e-3, abs(num)), (k, idx)


def test_nll_includes_gaussian_constant():
    m = init_cinn(4, 1)
    y = np.zeros((3, 4))
    assert mean_nll(m, y, np.zeros((3, 1))) == pytest.approx(2 * np.log(2 * np.pi))


def test_zero_epochs_is_noop():
    m = init_cinn(4, 2)
    out, trace = train_cinn(m, np.ones((5, 4)), np.ones((5, 2)), epochs=0)
    assert trace == [] and not out.trained
    for k in m.params:
        np.testing.assert_array_equal(out.params[k], m.params[k])


def test_training_lowers_nll():
    rng = np.random.default_rng(0)
    c = rng.standard_normal((300, 2))
    y = np.column_stack([c[:, 0], -c[:, 1], c[:, 0] + c[:, 1], 0.5 * c[:, 0]]) + 0.3 * rng.standard_normal((300, 4))
    out, trace = train_cinn(init_cinn(4, 2, n_blocks=4, hidden=16), y, c, epochs=20, lr=1e-2)
    assert trace[-1] < out.meta["initial_nll"]
    assert len(trace) == 20


def test_non_finite_targets_abort():
    y = np.ones((8, 4))
    y[3, 2] = np.nan
    with pytest.raises(NonFiniteLoss):
        train_cinn(init_cinn(4, 1), y, np.ones((8, 1)), epochs=1)


def pf_of(values):
    values = np.atleast_2d(values)
    return PointForecast(values, np.arange(len(values)))


def test_sigma_zero_collapses_to_point():
    m = randomize(init_cinn(4, 2, n_blocks=3, hidden=6), 1)
    m.trained = True
    rng = np.random.default_rng(1)
    yhat, c = rng.standard_normal((5, 4)), rng.standard_normal((5, 2))
    qf = quantiles_from_point(m, pf_of(yhat), c, SamplingConfig(0.0, M=20), seed=0)
    spread = qf.values[..., -1] - qf.values[..., 0]
    assert spread.max() < 1e-5
    np.testing.assert_allclose(qf.values[..., 9], yhat, atol=1e-5)


def test_identity_flow_gives_normal_quantiles():
    m = init_cinn(2, 1)
    m.trained = True
    lv = (norm.cdf(-1), norm.cdf(1))
    qf = quantiles_from_point(m, pf_of(np.zeros(2)), np.zeros((1, 1)), SamplingConfig(1.0, M=2000, levels=lv), seed=0)
    np.testing.assert_allclose(qf.values[0, :, 0], -1, atol=0.1)
    np.testing.assert_allclose(qf.values[0, :, 1], 1, atol=0.1)


@given(st.floats(0.0, 3.0), st.integers(0, 1000))
def test_quantiles_monotone_in_level(sigma, seed):
    m = randomize(init_cinn(3, 1, n_blocks=2, hidden=4), seed)
    m.trained = True
    qf = quantiles_from_point(m, pf_of(np.zeros((2, 3))), np.ones((2, 1)), SamplingConfig(sigma, M=25), seed)
    assert np.all(np.diff(qf.values, axis=-1) >= 0)
    assert qf.samples.shape == (2, 3, 25)


def test_untrained_model_rejected():
    with pytest.raises(UntrainedModel):
        quantiles_from_point(init_cinn(2, 1), pf_of(np.zeros(2)), np.zeros((1, 1)), SamplingConfig(1.0))


def test_sampling_config_validation():
    with pytest.raises(ValueError):
        SamplingConfig(-0.1)
    with pytest.raises(ValueError):
        SamplingConfig(1.0, M=1)
    with pytest.raises(ValueError):
        SamplingConfig(1.0, levels=(0.5, 0.4))


def test_save_load_round_trip(tmp_path):
    m = randomize(init_cinn(5, 3, raw_dim=7, n_blocks=2, hidden=4), 4)
    m.save(tmp_path / "cinn.json")
    back = CinnModel.load(tmp_path / "cinn.json")
    rng = np.random.default_rng(0)
    y, c = rng.standard_normal((4, 5)), rng.standard_normal((4, 7))
    np.testing.assert_array_equal(forward(back, y, c)[0], forward(m, y, c)[0])


def test_estimator_wrapper():
    rng = np.random.default_rng(2)
    R = rng.standard_normal((200, 6))
    Y = R[:, :4] + 0.2 * rng.standard_normal((200, 4))
    est = CINN(n_blocks=2, hidden=8, cond_dim=3, epochs=3).fit(Y, R)
    Z = est.transform(Y, R)
    np.testing.assert_allclose(est.inverse_transform(Z, R), Y, atol=1e-9)
    assert clone(est).get_params() == est.get_params()
    qf = est.predict_quantiles(pf_of(Y[:3]), R[:3], sigma=0.5, M=10)
    assert qf.values.shape == (3, 4, 19)
