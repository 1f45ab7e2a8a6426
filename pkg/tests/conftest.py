import numpy as np
import pytest

# filled by test_acceptance.py, one "criterion N: PASS|FAIL ..." line per criterion
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
