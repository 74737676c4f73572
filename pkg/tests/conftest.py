"""Collects PASS/FAIL lines from the acceptance suite and prints them at the end."""

import pytest

_RESULTS = []


@pytest.fixture
def acceptance():
    """``acceptance(name, ok, detail)`` records one criterion outcome."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _RESULTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in _RESULTS:
        terminalreporter.write_line(line)
