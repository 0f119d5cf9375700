"""Collects ``@pytest.mark.acceptance(key, title)`` outcomes into one line per criterion."""
import pytest

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(key, title): acceptance criterion gate")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    key, title = marker.args
    entry = _RESULTS.setdefault(key, {"title": title, "passed": True, "notes": []})
    if rep.failed or rep.skipped:
        entry["passed"] = False
        entry["notes"].append(f"{item.name}: {'skipped' if rep.skipped else 'failed'}")
    for name, value in item.user_properties:
        if name == "detail":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        entry = _RESULTS[key]
        status = "PASS" if entry["passed"] else "FAIL"
        detail = "; ".join(dict.fromkeys(entry["notes"]))
        terminalreporter.write_line(f"[{status}] {key} {entry['title']}" + (f" -- {detail}" if detail else ""))
