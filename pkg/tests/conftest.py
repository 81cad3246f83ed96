import numpy as np
import pytest

from retrace_sde.core import make_rng
from retrace_sde.simulator import GenSpec, InitSpec, make_irreversible_params, simulate

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def small_system():
    """d=3 irreversible system with transient start and 300 ordered trajectories."""
    params = make_irreversible_params(3, make_rng(7, 0), GenSpec(min_irreversibility=0.1), 0.01)
    e = simulate(params, 300, 20, InitSpec.gaussian(5.0, 1.0), make_rng(7, 1))
    return params, e


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
