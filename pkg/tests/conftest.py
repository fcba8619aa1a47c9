"""Collects acceptance-criterion outcomes and prints one line per criterion."""

from __future__ import annotations

import pytest

_criteria: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    ident, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else report.outcome.upper()
        if status == "FAILED":
            status = "FAIL"
        previous = _criteria.get(ident, (title, "PASS"))[1]
        # a criterion backed by several tests passes only if all of them do
        _criteria[ident] = (title, status if previous == "PASS" else previous)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for ident in sorted(_criteria, key=lambda k: int(k[2:])):
        title, status = _criteria[ident]
        terminalreporter.write_line(f"{ident} {status:<4} {title}")
