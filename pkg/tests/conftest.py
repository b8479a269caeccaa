import os
import sys
from fractions import Fraction

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from hitlab.measures import MeasureModel, builtin_measures  # noqa: E402
from hitlab.symbolic import SymbolicSystem  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

F = Fraction

# filled by test_acceptance; printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def full2():
    return SymbolicSystem.full_shift(2)


@pytest.fixture
def golden():
    return SymbolicSystem.golden_mean()


@pytest.fixture
def b5():
    return builtin_measures()["bernoulli-1/2"]


@pytest.fixture
def b3():
    return builtin_measures()["bernoulli-3/10"]


@pytest.fixture
def markov():
    return builtin_measures()["markov"]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
