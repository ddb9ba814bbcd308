import numpy as np
import pytest

from zeno.toybench import default_world

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def world():
    return default_world()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
