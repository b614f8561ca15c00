import numpy as np
import pytest

from qmarkov.chain import xy_benchmark, xy_model

# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bench():
    return xy_benchmark()


@pytest.fixture(scope="session")
def balanced_zero():
    """XY chain at theta0 = 0 with balanced input (|0> + |1>)/sqrt(2)."""
    return xy_model(2**-0.5, 2**-0.5, 0.0, 0.0)


def random_model(rng, d=2, k=3, theta0=0.7):
    from qmarkov import linalg
    from qmarkov.chain import ChainModel

    return ChainModel(d, k, linalg.random_hermitian(d * k, rng), linalg.random_state(d, rng), theta0)
