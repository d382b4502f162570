import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from autoquant.data import TimeSeriesDataset, make_splits, split_dataset
from autoquant.synthetic import SyntheticSpec, generate

from _helpers import hourly

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_dataset():
    """Hourly series with one exogenous column and a 60/20/20 split."""
    rng = np.random.default_rng(0)
    n = 600
    k = np.arange(n)
    x = np.sin(2 * np.pi * k / 24)
    y = 0.5 * x + 0.1 * rng.standard_normal(n)
    ds = TimeSeriesDataset(hourly(n), y, {"x": x})
    return split_dataset(ds, (359, 479))


@pytest.fixture
def small_windows(small_dataset):
    return make_splits(small_dataset, 24, 24)


@pytest.fixture(scope="session")
def hetero_small():
    ds, handle = generate(SyntheticSpec("hetero_ar1", length=1500, seed=0))
    return ds, handle


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
