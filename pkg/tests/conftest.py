import numpy as np
import pytest

from riskdyn.io import load_dataset
from riskdyn.model import DerivedRates
from riskdyn.sample import sample_paths

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sample():
    p = sample_paths()
    return load_dataset(p["risks"], p["edges"], p["history"])


@pytest.fixture(scope="session")
def sample_files():
    return sample_paths()


def isolated_rates(p_int, p_con):
    """Uncoupled risks with the given monthly probabilities."""
    p_int = np.asarray(p_int, dtype=float)
    p_con = np.asarray(p_con, dtype=float)
    return DerivedRates(p_int, p_con, np.zeros((p_int.size, p_int.size)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
