import numpy as np
import pytest

from bistatic_tracker.scenario import ScenarioGeometry

LAMBDA = 0.16205


@pytest.fixture
def geom():
    return ScenarioGeometry(tx1=(-51.764, -193.185), tx2=(86.94, -212.504), rx1=(0, 0), rx2=(30, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests.acceptance_log import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
