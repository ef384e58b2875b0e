import numpy as np
import pytest

from offload_game.model import MnoParams, make_profiles


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pair_profiles():
    """Two APs used throughout the two-AP examples: c=(2,3), w=(0.2,0.3), T=(5,5)."""
    return make_profiles([2.0, 3.0], [0.2, 0.3], [5.0, 5.0])


@pytest.fixture
def pair_params():
    return MnoParams(50.0)


def random_profiles(rng, n, cost_hi=5.0):
    return make_profiles(rng.uniform(0.1, cost_hi, n), rng.uniform(0.1, 1.0, n), rng.uniform(0.5, 5.0, n))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
