import numpy as np
import pytest

from skewgraphs.skew_system import default_system, perturb


@pytest.fixture(scope="session")
def ref_system():
    return default_system()


@pytest.fixture(scope="session")
def bony_system(ref_system):
    return perturb(ref_system, 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
