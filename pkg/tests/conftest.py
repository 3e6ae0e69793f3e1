import functools

import pytest
from hypothesis import settings

from qlinverse.mesh import build_grid

settings.register_profile("qlinverse", max_examples=25, deadline=None)
settings.load_profile("qlinverse")

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def grid_of(n):
    return build_grid(n)


@pytest.fixture
def g33():
    return grid_of(33)


@pytest.fixture
def g17():
    return grid_of(17)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
