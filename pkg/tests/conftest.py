import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blhedge.measures import CorrelatedLognormal, binomial_fixture_2d, binomial_measure

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLE = json.loads((Path(__file__).parent / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


@pytest.fixture(scope="session")
def ln1():
    return CorrelatedLognormal([100.0], [0.2], 1.0)


@pytest.fixture(scope="session")
def ln2_rho05():
    return CorrelatedLognormal([100.0, 90.0], [0.2, 0.3], 1.0, [[1.0, 0.5], [0.5, 1.0]])


@pytest.fixture(scope="session")
def binom1():
    return binomial_measure(100.0, 1.1, 1 / 1.1, 6)


@pytest.fixture(scope="session")
def binom2():
    return binomial_fixture_2d()


def lognormal(spot, vol, rho=None, T=1.0):
    corr = None if rho is None else np.array([[1.0, rho], [rho, 1.0]])
    return CorrelatedLognormal(spot, vol, T, corr)


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _CRITERIA.extend(l for l in report.capstdout.splitlines() if l.startswith("criterion "))


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
