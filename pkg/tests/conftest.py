"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "status": None, "detail": ""})
    if rep.failed:
        entry["status"] = "FAIL"
        entry["detail"] = rep.longreprtext.strip().splitlines()[-1] if rep.longreprtext else rep.when
    elif rep.when == "call" and entry["status"] is None:
        entry["status"] = "PASS"
        entry["detail"] = "; ".join(str(v) for k, v in item.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        r = _RESULTS[n]
        status = r["status"] or "FAIL"
        line = f"{status} criterion {n:2d}: {r['title']}"
        if r["detail"]:
            line += f" ({r['detail']})"
        terminalreporter.write_line(line)
