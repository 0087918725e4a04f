from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from isolab.grid import make_ball_grid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid2_64():
    return make_ball_grid(2, 1 / 64)


@pytest.fixture(scope="session")
def grid2_32():
    return make_ball_grid(2, 1 / 32)


@pytest.fixture(scope="session")
def grid3_16():
    return make_ball_grid(3, 1 / 16)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
