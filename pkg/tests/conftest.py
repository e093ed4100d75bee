import pytest

REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[REPORT_KEY] = []


@pytest.fixture
def acceptance_report(request):
    """Append ``(criterion, passed, detail)`` to the end-of-run summary."""
    lines = request.config.stash[REPORT_KEY]

    def report(criterion: int, passed: bool, detail: str):
        lines.append((criterion, passed, detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(REPORT_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")
