import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        if rep.skipped:
            status = "NOT VERIFIED"
            detail = detail or str(rep.longrepr[-1] if isinstance(rep.longrepr, tuple) else rep.longrepr)
        else:
            status = "PASS" if rep.passed else "FAIL"
        _CRITERIA[number] = (title, status, detail)
        line = f"criterion {number:>2} [{status}] {title}" + (f": {detail}" if detail else "")
        print(f"\n{line}", file=sys.__stdout__, flush=True)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} [{status}] {title}" + (f": {detail}" if detail else ""))
