import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if not m:
        return
    n = int(m.group(1))
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    prev = _results.get(n, (True, item.function.__doc__ or ""))
    _results[n] = (prev[0] and not failed, prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        ok, doc = _results[n]
        title = doc.strip().splitlines()[0] if doc.strip() else ""
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {title}")
