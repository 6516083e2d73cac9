import numpy as np
import pytest

from edgehtl.dataset import Dataset, prepare, synthetic_covtype


def make_dataset(n=70, d=5, k=7, seed=0, balanced=True):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k if balanced else rng.integers(k, size=n)
    X = rng.normal(size=(n, d)) + y[:, None] * 0.5
    return Dataset(X, y, k)


@pytest.fixture
def small_data():
    return make_dataset()


@pytest.fixture(scope="session")
def surrogate():
    """Balanced, split, standardized synthetic data with the real feature layout."""
    return prepare(synthetic_covtype(24000, np.random.default_rng(1)), seed=1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
