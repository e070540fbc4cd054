import re

import pytest

ACCEPTANCE_FILE = "test_acceptance.py"
_CRITERION = re.compile(r"::test_(c\d\d)_(\w+)")
_results: dict[str, tuple[str, str, float]] = {}
_notes: dict[str, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach a line of diagnostics to this criterion's summary entry."""
    key = _CRITERION.search(request.node.nodeid).group(1)
    return lambda text: _notes.setdefault(key, []).append(text)


def pytest_runtest_logreport(report):
    if ACCEPTANCE_FILE not in report.nodeid:
        return
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key, name = m.groups()
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        # parametrised criteria pass only if every case passes
        _, prev, spent = _results.get(key, ("", "PASS", 0.0))
        worst = "FAIL" if "FAIL" in (prev, outcome) else outcome if prev == "PASS" else prev
        _results[key] = (name.replace("_", " "), worst, spent + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        name, outcome, duration = _results[key]
        terminalreporter.write_line(f"{key} {outcome:4s} {name} ({duration:.1f} s)")
        for text in _notes.get(key, []):
            terminalreporter.write_line(f"      {text}")
