import numpy as np
import pytest

from corrsel.model import MeasurementModel, random_model

ACCEPTANCE_LINES: list[str] = []


def make_model(seed, m=6, n=2, corr_param=0.1, **kw) -> MeasurementModel:
    return random_model(m, n, np.random.default_rng(seed), corr_param=corr_param, **kw)[0]


def identity_model(m=2, n=2, noise=None) -> MeasurementModel:
    R = np.eye(m) if noise is None else np.asarray(noise, dtype=float)
    return MeasurementModel(np.zeros(n), np.eye(n), np.eye(m, n), R)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
