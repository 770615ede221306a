import numpy as np
import pytest

from subunit.zoo import make_rng

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long running statistical checks")


@pytest.fixture
def rng():
    return make_rng(20240611)


@pytest.fixture(scope="session")
def criterion_log():
    """Acceptance tests record ``(criterion, passed, detail)`` here for the end-of-run summary."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        passed, detail = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

