import pytest

_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture
def acceptance_report(request):
    """Append ``(criterion, passed, line)`` rows shown at the end of the run."""
    return request.config.stash[_REPORT_KEY]


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_REPORT_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(rows):
        terminalreporter.write_line(line)
