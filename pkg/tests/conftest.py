import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from linconsensus import SystemMatrix
from reference import DATA, EX_A

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def record_criterion(request):
    """Store a criterion outcome for the end-of-run acceptance summary."""
    store = request.config.stash[ACCEPTANCE]

    def record(number: int, passed: bool, detail: str):
        store[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 10):
        if number not in store:
            terminalreporter.write_line(f"criterion {number}: NOT RECORDED (test errored or was deselected)")
            continue
        passed, detail = store[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def example():
    return SystemMatrix(EX_A, 2, 2)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
