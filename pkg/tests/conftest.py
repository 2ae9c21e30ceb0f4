from acceptance_report import LINES


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts where captured stdout would hide them."""
    if LINES:
        terminalreporter.section("acceptance gate")
        for line in LINES:
            terminalreporter.line(line)
