_LINES = []


def record_criterion(line: str) -> None:
    _LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
