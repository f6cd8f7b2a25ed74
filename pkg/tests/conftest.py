import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.skipped and isinstance(report.longrepr, tuple):
            status += f" ({report.longrepr[2].removeprefix('Skipped: ')})"
        _criteria.append((marker.args[0], marker.args[1], item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    grouped = {}
    for cid, title, name, status in _criteria:
        grouped.setdefault((cid, title), []).append((name, status))
    for (cid, title), results in sorted(grouped.items()):
        statuses = [s for _, s in results]
        if any(s == "FAIL" for s in statuses):
            verdict = "FAIL"
        elif all(s.startswith("SKIP") for s in statuses):
            verdict = statuses[0]
        else:
            verdict = "PASS"
        skipped = [n for n, s in results if s.startswith("SKIP")]
        note = f" [{len(skipped)} gated check(s) skipped]" if skipped and verdict == "PASS" else ""
        terminalreporter.write_line(f"criterion {cid}: {verdict}  {title}{note}")


def data_dir(env, default):
    path = os.environ.get(env, os.path.join(os.path.dirname(__file__), "..", "data", default))
    return path if os.path.isdir(path) else None


@pytest.fixture
def sst_official():
    path = data_dir("CLSTM_SST_DIR", "sst")
    if path is None:
        pytest.skip("official SST files not present (set CLSTM_SST_DIR)")
    return path


@pytest.fixture
def trec_official():
    path = data_dir("CLSTM_TREC_DIR", "trec")
    if path is None:
        pytest.skip("official TREC files not present (set CLSTM_TREC_DIR)")
    return path
