from __future__ import annotations

import pytest

_lines: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then fail the test if the criterion failed."""

    def report(name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _lines.append(line)
        print(line)
        assert ok, f"{name}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in _lines:
            terminalreporter.write_line(line)
