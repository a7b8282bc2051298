"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("detail", "")
        _results[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_results, key=lambda n: int(n.split("_")[2])):
        outcome, detail = _results[name]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
