ACCEPTANCE = []


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
