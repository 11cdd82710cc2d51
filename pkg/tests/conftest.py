import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anderson_lab.config import ModelConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_config():
    return ModelConfig(12, coupling=1.0, perturbation=(((0,), 1.0),), perturbation_strength=1.0, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_symmetric(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) * scale
    return 0.5 * (m + m.T)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE_LINES.append((criterion, f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
