_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        _ACCEPTANCE.append((props.get("criterion", report.nodeid), report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: str(r[0])):
        line = f"{'PASS' if passed else 'FAIL'} {name}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
