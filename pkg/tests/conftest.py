import math

import numpy as np
import pytest

from crossband import LinkSnr, build_linear_constellation, make_linear_map, make_qam


@pytest.fixture(scope="session")
def grid16():
    return make_qam(16)


@pytest.fixture(scope="session")
def map45(grid16):
    return make_linear_map(grid16, math.pi / 4)


@pytest.fixture(scope="session")
def lin45(grid16, map45):
    return build_linear_constellation(grid16, map45)


@pytest.fixture
def snr10():
    return LinkSnr.from_db(10.0, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
