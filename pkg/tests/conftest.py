"""Collects the acceptance criteria results into one summary block."""

import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        detail = dict(item.user_properties).get("detail", "")
        prev = _results.get(number)
        if prev is None or failed:
            _results[number] = (title, "FAIL" if failed else "PASS", detail, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, status, detail, seconds = _results[number]
        line = f"criterion {number}: {status}  {title} ({seconds:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
