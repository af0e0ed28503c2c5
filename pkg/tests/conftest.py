import numpy as np
import pytest

from virtual_particles import MfnnSpec, PairwiseSpec

# fixed once, before any acceptance run; never tuned per outcome
ACCEPTANCE_SEED = 2024

ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
    line = f"ACCEPTANCE criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def quad():
    return PairwiseSpec.quadratic(1.0, 0.5, 1.0)


@pytest.fixture
def quad3():
    return PairwiseSpec.quadratic(1.0, 0.5, 1.0, dim=3)


@pytest.fixture
def small_mfnn():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(8, 2))
    w = 0.5 * np.tanh(z @ np.array([1.0, -0.5]))
    return MfnnSpec(z, w, amplitude=1.0, lam=0.1, sigma=0.5)
