import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record a one-line PASS/FAIL for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_LINES, [])

    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
