"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "status": set(), "notes": {}})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["status"].add(report.outcome)
    # Properties named "measured:<tag>" become notes; the latest value per tag wins.
    for key, value in item.user_properties:
        if key.startswith("measured:") and value:
            entry["notes"][key] = value


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = entry["status"]
        if "failed" in status:
            verdict = "FAIL"
        elif status == {"skipped"}:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        notes = f" [{'; '.join(entry['notes'].values())}]" if entry["notes"] else ""
        terminalreporter.write_line(f"{verdict} criterion {number}: {entry['title']}{notes}")
