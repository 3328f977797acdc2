import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("sclkin", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sclkin")


@pytest.fixture(autouse=True)
def _quiet_peclet():
    # the grid-Peclet warning is informational; individual tests check it explicitly
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="grid-Peclet")
        yield


_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance verdict; all verdicts are listed in the terminal summary."""
    def rec(number, ok, detail=""):
        _CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return rec


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
