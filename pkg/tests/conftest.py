import numpy as np
import pytest

_ACCEPTANCE: list[tuple[int, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = dict(report.keywords).get("acceptance")
    if marker is None:
        return
    crit = getattr(report, "_acceptance", None)
    if crit is not None:
        _ACCEPTANCE.append((crit[0], crit[1], report.outcome.upper()))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        rep._acceptance = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, outcome in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {outcome:6s} {desc}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
