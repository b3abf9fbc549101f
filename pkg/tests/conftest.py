import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    match = _CRITERION.search(item.name)
    if match is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _results[int(match.group(1))] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        status, detail = _results[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {detail}".rstrip())
