import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from autoquant.baselines import conformal_pi, conformal_rank, empirical_pi, gaussian_pi, nearest_rank, residuals
from autoquant.exceptions import CalibrationTooSmall, ShapeMismatch, TooFewResiduals
from autoquant.forecast import PointForecast


def pf(values):
    values = np.atleast_2d(np.asarray(values, float))
    return PointForecast(values, np.arange(len(values)))


def bounds(q):
    return q.values[..., 0], q.values[..., 1]


def test_residuals():
    np.testing.assert_array_equal(residuals(pf([[1.0, 3.0]]), [[1.0, 3.0]]), 0.0)
    np.testing.assert_array_equal(residuals(pf([[1.0, 3.0]]), [[2.0, 1.0]]), [[1.0, 2.0]])
    with pytest.raises(ShapeMismatch):
        residuals(pf([[1.0, 3.0]]), [[2.0, 1.0, 0.0]])


def test_gaussian_example():
    rs = np.full((4, 1), 2.0)  # RMS of the absolute residuals is 2
    lo, hi = bounds(gaussian_pi(pf([[10.0]]), rs, 0.95))
    z = norm.ppf(0.975)
    assert z == pytest.approx(1.959964, abs=1e-6)
    assert lo[0, 0] == pytest.approx(6.0801, abs=1e-4)
    assert hi[0, 0] == pytest.approx(13.9199, abs=1e-4)


def test_gaussian_degenerate_cases():
    lo, hi = bounds(gaussian_pi(pf([[5.0, 6.0]]), np.zeros((3, 2)), 0.9))
    np.testing.assert_array_equal(lo, [[5.0, 6.0]])
    np.testing.assert_array_equal(hi, [[5.0, 6.0]])
    q = gaussian_pi(pf([[5.0]]), np.ones((3, 1)), 0.0)
    assert np.ptp(q.values) == 0.0
    with pytest.raises(TooFewResiduals):
        gaussian_pi(pf([[5.0]]), np.ones((1, 1)), 0.9)


def test_gaussian_levels_are_endpoints():
    q = gaussian_pi(pf([[0.0]]), np.ones((3, 1)), 0.8)
    np.testing.assert_allclose(q.levels, [0.1, 0.9])


def test_empirical_examples():
    rs = np.arange(1.0, 6.0)[:, None]
    lo, hi = bounds(empirical_pi(pf([[0.0]]), rs, 0.8))
    assert (lo[0, 0], hi[0, 0]) == (-4.0, 4.0)
    assert np.ptp(empirical_pi(pf([[2.0]]), np.zeros((4, 1)), 0.9).values) == 0
    lo, hi = bounds(empirical_pi(pf([[0.0]]), rs, 1.0))
    assert hi[0, 0] == 5.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.floats(0.01, 1.0))
def test_nearest_rank_matches_definition(values, q):
    v = sorted(values)
    k = max(1, math.ceil(len(v) * q - 1e-12))
    assert nearest_rank(values, q) == v[min(k, len(v)) - 1]


def test_conformal_rank_examples():
    assert conformal_rank(19, 0.1, 2) == 19
    rs = np.arange(1.0, 20.0)[::-1]
    rs = np.column_stack([rs, rs])
    lo, hi = bounds(conformal_pi(pf([[0.0, 0.0]]), rs, 0.1, 2))
    np.testing.assert_array_equal(hi, [[19.0, 19.0]])
    assert conformal_rank(3, 0.5, 1) == 2
    lo, hi = bounds(conformal_pi(pf([[1.0]]), np.array([[3.0], [1.0], [2.0]]), 0.5, 1))
    assert (lo[0, 0], hi[0, 0]) == (-1.0, 3.0)
    with pytest.raises(CalibrationTooSmall):
        conformal_pi(pf([np.zeros(10)]), np.ones((2, 10)), 0.1, 10)


def test_conformal_levels_are_bonferroni():
    q = conformal_pi(pf([np.zeros(4)]), np.ones((100, 4)), 0.2)
    np.testing.assert_allclose(q.levels, [0.025, 0.975])


residual_sets = st.integers(0, 2**16).map(lambda s: np.abs(np.random.default_rng(s).standard_t(3, size=(60, 3))))


@given(residual_sets, st.floats(0.05, 10))
def test_symmetric_and_scale_equivariant(rs, s):
    p = pf([[1.0, -2.0, 0.5]])
    for build, arg in ((gaussian_pi, 0.9), (empirical_pi, 0.9), (conformal_pi, 0.2)):
        lo, hi = bounds(build(p, rs, arg))
        np.testing.assert_allclose(hi - p.values, p.values - lo, atol=1e-12)
        lo2, hi2 = bounds(build(p, s * rs, arg))
        np.testing.assert_allclose(hi2 - lo2, s * (hi - lo), rtol=1e-12, atol=1e-12)


@given(residual_sets)
def test_widths_monotone(rs):
    p = pf([np.zeros(3)])
    widths = [np.ptp(empirical_pi(p, rs, g).values, axis=-1) for g in (0.5, 0.8, 0.9, 0.99)]
    assert all(np.all(b >= a) for a, b in zip(widths, widths[1:]))
    widths = [np.ptp(conformal_pi(p, rs, a).values, axis=-1) for a in (0.5, 0.2, 0.1, 0.05)]
    assert all(np.all(b >= a) for a, b in zip(widths, widths[1:]))


def test_conformal_coverage_on_exchangeable_noise():
    rng = np.random.default_rng(0)
    H, alpha, n_test = 6, 0.1, 500
    cal = np.abs(rng.normal(size=(200, H)))
    q = conformal_pi(pf(np.zeros((n_test, H))), cal, alpha)
    y = rng.normal(size=(n_test, H))
    lo, hi = bounds(q)
    joint = np.mean(np.all((lo <= y) & (y <= hi), axis=1))
    assert joint >= 1 - alpha - 1.96 * math.sqrt(alpha * (1 - alpha) / n_test)
