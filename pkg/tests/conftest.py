import numpy as np
import pytest
from hypothesis import settings

from stablewalk.groups import get_group
from stablewalk.metric import WordMetric

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def Z():
    return get_group("Z^1")


@pytest.fixture(scope="session")
def Z2():
    return get_group("Z^2")


@pytest.fixture(scope="session")
def H():
    return get_group("heisenberg3")


@pytest.fixture(scope="session")
def D():
    return get_group("dihedralxZ")


@pytest.fixture(scope="session")
def U4():
    return get_group("unipotent4")


@pytest.fixture(scope="session")
def metric_Z(Z):
    return WordMetric(Z)


@pytest.fixture(scope="session")
def metric_H(H):
    return WordMetric(H, radius_cap=12)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
