"""Session plumbing: one printed verdict line per labeled acceptance check."""

import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(label): headline check that prints one verdict line",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    if rep.when == "call":
        _RESULTS[label] = rep.passed
    elif rep.failed:  # setup/teardown error counts as a failure
        _RESULTS[label] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance checks")
    for label, ok in _RESULTS.items():
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  {label}")
