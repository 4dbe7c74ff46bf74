import numpy as np
import pytest

from fedminimax import make_quadratic_minimax

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def quad():
    return make_quadratic_minimax(4, 4, 4, spec={"hetero": 0.3}, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
