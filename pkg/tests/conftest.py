"""Shared fixtures and the per-criterion acceptance summary."""
from __future__ import annotations

from collections import defaultdict

import pytest

_criteria: dict[int, str] = {}
_outcomes: dict[int, list[bool]] = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _criteria[number] = title
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[number].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        results = _outcomes.get(number, [])
        status = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {_criteria[number]} ({len(results)} checks)")
