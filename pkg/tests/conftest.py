from __future__ import annotations

import sys
from collections import OrderedDict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcsauto import _backend  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).parent / "fixtures"
DATA = ROOT / "data"

_criteria: "OrderedDict[int, dict]" = OrderedDict()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture(params=sorted(_backend.available_backends()))
def kernels(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = _backend.available_backends()[request.param]
    monkeypatch.setattr(_backend, "cosine_distances", impl.cosine_distances)
    monkeypatch.setattr(_backend, "word_edit_distance", impl.word_edit_distance)
    monkeypatch.setattr(_backend, "BACKEND", request.param)
    return request.param


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    number, title = crit
    entry = _criteria.setdefault(number, {"title": title, "failed": False, "passed": False})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.failed:
            entry["failed"] = True
        elif report.passed:
            entry["passed"] = True


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        if entry["failed"]:
            status = "FAIL"
        elif entry["passed"]:
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")
