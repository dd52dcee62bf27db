import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from agestruct import AgeProfile, make_grid
from agestruct.trajectory import TruncationWarning

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def indicator(lo, hi, left_open=False):
    def f(a):
        a = np.asarray(a, float)
        inside = (a > lo + 1e-9) if left_open else (a >= lo - 1e-9)
        return np.where(inside & (a <= hi + 1e-9), 1.0, 0.0)

    return f


@pytest.fixture
def grid10():
    return make_grid(10.0, 1000)


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


def profile(grid, f):
    return AgeProfile.from_function(grid, f)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
