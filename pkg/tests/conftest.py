import numpy as np
import pytest

from stochepi.models import Params, integrate_deterministic, sir_spec
from stochepi.observation import ObservationModel, simulate_series

N = 4820
INIT = np.array([4800, 20, 0])


@pytest.fixture(scope="session")
def sir():
    return sir_spec(N)


@pytest.fixture(scope="session")
def ode_path(sir):
    return integrate_deterministic(sir, Params(2.0, 1.0), INIT, np.arange(16.0))


@pytest.fixture(scope="session")
def noisy_data(ode_path):
    return simulate_series(ObservationModel.gaussian(0.01), ode_path, rng=1)


@pytest.fixture(scope="session")
def binomial_data(ode_path):
    return simulate_series(ObservationModel.binomial(0.1), ode_path, rng=2)


CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store the one-line verdict of an acceptance criterion for the summary."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}"
        CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
