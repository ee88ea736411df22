"""Shared fixtures. Expensive objects are built once per session."""

import numpy as np
import pytest

from kirchhoff_chaos import horseshoe, pendulum, resonant


@pytest.fixture(scope="session")
def cfg23():
    return resonant.make_config(2, 3)


@pytest.fixture(scope="session")
def cfg225():
    return resonant.make_config(2, 25)


@pytest.fixture(scope="session")
def a0():
    return pendulum.find_a0()


@pytest.fixture(scope="session")
def orbit05(a0):
    return horseshoe.continue_periodic_orbit(0.05, a0)


@pytest.fixture(scope="session")
def itinerary05(orbit05):
    M0, _ = horseshoe.measure_M0(orbit05)
    return horseshoe.target_itinerary([M0 + 1, M0 + 3, M0 + 2], 0.05, orbit05, M0=M0)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash[ACCEPTANCE_LINES]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def transversality05(orbit05):
    return horseshoe.transversality_check(0.05, orbit05)


@pytest.fixture(scope="session")
def setup225(cfg225):
    from kirchhoff_chaos import harness
    return harness.prepare(cfg225, 0.05, [1, 3, 2])
