import numpy as np
import pytest
from hypothesis import settings

from gneseek.convex_sets import FullSpace
from gneseek.game import quadratic_game
from gneseek.network import from_edges

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

# J1 = x1^2 + x1 x2 - x1, J2 = x2^2 + x1 x2 - 2 x2
TWO_Q = [[[2.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, 2.0]]]
TWO_q = [[-1.0, 0.0], [0.0, -2.0]]


def two_agent_game(coupled=False, **constants):
    if coupled:
        return quadratic_game(TWO_Q, TWO_q, [FullSpace(1)] * 2, [[[1.0]], [[1.0]]], b=[0.5],
                              **constants)
    return quadratic_game(TWO_Q, TWO_q, [FullSpace(1)] * 2, **constants)


@pytest.fixture
def two_free():
    return two_agent_game()


@pytest.fixture
def two_coupled():
    return two_agent_game(coupled=True)


@pytest.fixture
def pair_graph():
    return from_edges(2, [(1, 2, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
