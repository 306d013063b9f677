import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion number and title")


def pytest_itemcollected(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", tuple(mark.args)))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    # one criterion may span several tests; any failing phase marks it red
    if report.failed or (report.when == "call" and crit not in _acceptance):
        _acceptance[crit] = report.outcome if report.when == "call" else "failed"
    elif report.when == "call" and _acceptance[crit] == "passed":
        _acceptance[crit] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome in sorted(_acceptance.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {title}")
