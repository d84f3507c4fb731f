import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title, limit): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    start = time.perf_counter()
    yield
    item.user_properties.append(("elapsed", time.perf_counter() - start))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    num, title, limit = marker
    rec = _CRITERIA.setdefault(num, {"title": title, "limit": limit, "ok": True, "elapsed": 0.0})
    rec["ok"] &= report.passed
    rec["elapsed"] += dict(report.user_properties).get("elapsed", 0.0)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        rec = _CRITERIA[num]
        status = "PASS" if rec["ok"] else "FAIL"
        terminalreporter.write_line(
            f"{status} criterion {num:2d}: {rec['title']} "
            f"({rec['elapsed']:.1f} s, limit {rec['limit']} s)")
