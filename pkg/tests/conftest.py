from __future__ import annotations

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_LINES: list = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion.

    The lines are printed in the terminal summary whether or not output
    capturing is on.
    """

    def record(name: str, ok: bool, detail: str = "") -> bool:
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        print(_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
