from pathlib import Path

import pytest
from hypothesis import settings

from openauc.io import read_predictions

settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def worked_w_path():
    return FIXTURES / "worked_w.csv"


@pytest.fixture
def worked_w(worked_w_path):
    """Two known classes; at threshold 0.5 one close sample of class 1 is rejected."""
    return read_predictions(worked_w_path)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
