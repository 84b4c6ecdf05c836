import numpy as np
import pytest

from eivpd.datagen import NO_ERROR, Dataset, gen_dataset, preset_design

# filled by the acceptance tests, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def noiseless():
    """Design 2 with U = eps = 0: Y is exactly linear in X."""
    spec = preset_design("2", with_error=False, n_obs=500, seed=3).replace(eps_law=NO_ERROR)
    return gen_dataset(spec)


@pytest.fixture
def exact_linear():
    """Integer-valued data with Y = 1 + X1 + X2 exactly in floating point."""
    rng = np.random.default_rng(0)
    xs = rng.poisson(3, size=(400, 2)).astype(float) + rng.integers(-2, 3, size=(400, 2))
    return Dataset(xs + 1.0, 1.0 + xs @ np.array([1.0, 1.0]))


@pytest.fixture
def design2():
    return gen_dataset(preset_design("2", with_error=True, n_obs=1000, seed=17))


@pytest.fixture
def design1():
    return gen_dataset(preset_design("1", with_error=True, n_obs=1000, seed=5))


def random_dataset(rng, n=200, K=2):
    x = rng.normal(size=(n, K)) + rng.exponential(size=(n, K))
    y = x @ np.ones(K) + rng.normal(size=n)
    return Dataset(x, y)
