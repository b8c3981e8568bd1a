import json
from pathlib import Path

import pytest

from threshold_nls import harness as H

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def ctx():
    """b = 0.1 on the default n = 4096, r_max = 60 grid."""
    return H.get_context(0.1, 4096, 60.0)


@pytest.fixture(scope="session")
def small():
    """A coarser grid for tests that only need qualitative accuracy."""
    return H.get_context(0.1, 1024, 40.0)


@pytest.fixture
def acceptance():
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
