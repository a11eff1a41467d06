import pytest

ACCEPTANCE_LINES = pytest.StashKey()


@pytest.fixture
def acceptance_log(request):
    """Collect one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def log(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title} ({detail})"
        print(line)
        lines.append((number, line))

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
