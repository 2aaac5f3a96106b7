import numpy as np
import pytest

from filterergodic.model import fully_observed_model, parity_model, silent_model

FULLY_P = [[0.9, 0.1], [0.2, 0.8]]
SILENT_P = [[0.7, 0.3], [0.4, 0.6]]

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def parity():
    return parity_model()


@pytest.fixture
def fully():
    return fully_observed_model(FULLY_P)


@pytest.fixture
def silent():
    return silent_model(SILENT_P)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
