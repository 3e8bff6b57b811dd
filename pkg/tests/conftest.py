from importlib import resources

import numpy as np
import pytest

from smartbayes.core import Dataset

ACCEPTANCE_LINES: list[str] = []


def two_gaussians(seed, n_per_class=500, mu0=0.0, mu1=1.0, sd=1.0):
    rng = np.random.default_rng(seed)
    x = np.r_[rng.normal(mu0, sd, n_per_class), rng.normal(mu1, sd, n_per_class)]
    y = np.r_[np.zeros(n_per_class), np.ones(n_per_class)]
    return x, y


def random_dataset(seed, n=300, p=3, rho=0.5, shift=0.8) -> Dataset:
    """Correlated Gaussian classes with a mean shift."""
    rng = np.random.default_rng(seed)
    cov = rho * np.ones((p, p)) + (1 - rho) * np.eye(p)
    y = (rng.random(n) < 0.45).astype(np.int8)
    X = rng.multivariate_normal(np.zeros(p), cov, size=n) + shift * y[:, None] * np.linspace(1, 0.3, p)
    return Dataset(X, y, tuple(f"x{k}" for k in range(p)))


@pytest.fixture
def toy_csv():
    return str(resources.files("smartbayes") / "data" / "toy.csv")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
