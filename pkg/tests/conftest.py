import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one acceptance criterion's outcome for the end-of-run summary."""

    def record(number, ok, detail):
        _VERDICTS[number] = (bool(ok), detail)
        print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, detail = _VERDICTS[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
