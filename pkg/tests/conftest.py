import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hurdle_uplift.data import Dataset

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def make_dataset(n=400, p=3, seed=0, effect=0.0):
    """Small randomized campaign: logistic conversion, log-normal value."""
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, p)), 3)
    t = rng.integers(0, 2, n)
    logit = -1.0 + X[:, 0] + effect * t
    c = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    v = np.where(c == 1, np.round(np.exp(3 + 0.3 * X[:, 1] + 0.2 * rng.normal(size=n)), 6), 0.0)
    return Dataset(np.arange(n), X, t, c, v)


@pytest.fixture
def small_data():
    return make_dataset()


@pytest.fixture(scope="session")
def small_sim():
    from hurdle_uplift.simulation import SimConfig, simulate

    return simulate(3000, 30, SimConfig(seed=5, nuisance_pool=3000))


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; returns the boolean for the caller to assert."""

    def record(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
