"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): test that decides one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    decisive = report.when == "call" or (report.when == "setup" and not report.passed)
    if not decisive:
        return
    if report.skipped:
        status = "SKIP"
        detail = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
        detail = detail.removeprefix("Skipped: ")
    else:
        status = "PASS" if report.passed else "FAIL"
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _CRITERIA[number] = (title, status, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, duration, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title}  ({duration:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
