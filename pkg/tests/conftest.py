"""Collects the acceptance verdicts and prints them after the run."""

import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records one criterion line and returns ``ok``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
