import warnings

import numpy as np
import pytest

from dmtnet.verify import random_spd

_CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_CRITERIA):
        terminalreporter.write_line(line)


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})"
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spd():
    return random_spd


@pytest.fixture(autouse=True)
def _quiet_rank_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="rank-deficient recursive projections")
        yield
