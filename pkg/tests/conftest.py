"""Terminal summary for the acceptance suite: one PASS/FAIL line per
numbered criterion, printed after the normal pytest output."""

import re

_results = {}

_PATTERN = re.compile(r"test_acceptance\.py::.*criterion_(\d+)")


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call":
        _results[n] = report.passed and _results.get(n, True)
    elif not report.passed:
        # setup error or teardown failure counts against the criterion
        _results[n] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        verdict = "PASS" if _results[n] else "FAIL"
        terminalreporter.write_line(f"[ACCEPTANCE] criterion {n}: {verdict}")
