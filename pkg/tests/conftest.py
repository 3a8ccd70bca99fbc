import numpy as np
import pytest

from thrusthzd.control import Gains
from thrusthzd.gait import nominal_gait
from thrusthzd.model import ModelParams
from thrusthzd.zerodyn import build_zero_dynamics


@pytest.fixture(scope="session")
def p():
    return ModelParams()


@pytest.fixture(scope="session")
def g():
    return nominal_gait()


@pytest.fixture(scope="session")
def k():
    return Gains.from_epsilon()


@pytest.fixture(scope="session")
def funcs(g, p):
    return build_zero_dynamics(g, p)


@pytest.fixture(scope="session")
def fit(g, p, k, funcs):
    from thrusthzd.forces import fit_force_polynomials

    return fit_force_polynomials(g, p, 8, k, funcs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    lines = [test_acceptance.RESULTS[n] for n in sorted(test_acceptance.RESULTS)]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
