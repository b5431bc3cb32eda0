import numpy as np
import pytest

from mgsf.geometry import circular_array, linear_pair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circ7():
    return circular_array()


@pytest.fixture(scope="session")
def pair73():
    return linear_pair(0.073)


@pytest.fixture(scope="session")
def pair36():
    return linear_pair(0.036)


# one PASS/FAIL line per acceptance criterion, collected by tests/test_acceptance.py
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
