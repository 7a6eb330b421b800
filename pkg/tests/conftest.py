import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nnrepair.network import Network, random_network

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_net():
    """W1 = [[1], [-1]], W2 = [[1, 1]]: computes |x|."""
    return Network([(np.array([[1.0], [-1.0]]), np.zeros(2)), (np.array([[1.0, 1.0]]), np.zeros(1))])


@pytest.fixture
def identity_net():
    """One hidden ReLU feeding the output: y = x on [0, inf)."""
    return Network([(np.array([[1.0]]), np.zeros(1)), (np.array([[1.0]]), np.zeros(1))])


def make_net(widths, seed=0, scale=1.0):
    return random_network(widths, np.random.default_rng(seed), scale)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
