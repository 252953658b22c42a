"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary.

Tests tagged ``@pytest.mark.criterion(n, "title")`` contribute to criterion ``n``;
a criterion passes only if every contributing test passed. Tests may attach a
one-line measurement with ``request.node.user_properties.append(("detail", ...))``.
"""
from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _RESULTS.setdefault(n, {"title": title, "ok": True, "ran": False, "details": []})
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["ran"] = entry["ran"] or not rep.skipped
        if rep.failed:
            entry["ok"] = False
        if rep.when == "call":
            entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if e["ran"] else "SKIP")
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {n} [{status}] {e['title']}" + (f" :: {detail}" if detail else ""))
