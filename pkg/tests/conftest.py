from collections import defaultdict

_outcomes: dict = defaultdict(list)
_order: list = []


def pytest_runtest_logreport(report):
    label = dict(report.user_properties).get("acceptance")
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if label not in _outcomes:
            _order.append(label)
        xfail = hasattr(report, "wasxfail")
        _outcomes[label].append((report.nodeid.split("::")[-1], report.outcome, xfail))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        item.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _order:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label in _order:
        results = _outcomes[label]
        ok = all(outcome == "passed" or xfail for _, outcome, xfail in results)
        line = f"{'PASS' if ok else 'FAIL'}  {label}"
        expected = [name for name, _, xfail in results if xfail]
        if expected:
            line += f"  (expected failure recorded: {', '.join(expected)})"
        tr.write_line(line)
