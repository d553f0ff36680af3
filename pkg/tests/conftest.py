"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_OUTCOMES: dict[int, list[tuple[str, str, str]]] = {}
_RANK = {"FAIL": 2, "PASS": 1, "SKIP": 0}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def _status(item, report) -> tuple[str, str]:
    if hasattr(report, "wasxfail"):
        # an expected failure is still a failed criterion; pytest stays green
        return "FAIL", f"expected failure: {report.wasxfail}"
    if report.outcome == "skipped":
        return "SKIP", report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
    if report.outcome == "failed":
        lines = report.longreprtext.strip().splitlines() if report.longreprtext else []
        return "FAIL", lines[-1] if lines else ""
    return "PASS", getattr(item, "acceptance_detail", "")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        _OUTCOMES.setdefault(number, []).append((title, *_status(item, report)))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        title = results[0][0]
        status = max((s for _, s, _ in results), key=_RANK.__getitem__)
        details = "; ".join(d for _, s, d in results if d and s == status)
        line = f"criterion {number:>2} {status}: {title}"
        if details:
            line += f" ({details})"
        terminalreporter.write_line(line)
