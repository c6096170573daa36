import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from schrodinger_hardy.grid import Grid
from schrodinger_hardy.sweeps import Setting

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid2():
    return Grid(2, 2.0, 33)


@pytest.fixture(scope="session")
def bump22():
    """Bump potential on the coarse 3D grid with its derived objects."""
    return Setting(Grid(3, 2.0, 22), "bump")


@pytest.fixture(scope="session")
def const22():
    return Setting(Grid(3, 2.0, 22), "const")
