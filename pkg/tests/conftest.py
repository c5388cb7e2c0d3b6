import pytest


def pytest_configure(config):
    config._criteria_lines = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion and assert it."""
    lines = request.config._criteria_lines

    def _verdict(num, desc, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {desc}"
        if detail:
            line += f" [{detail}]"
        lines.append((num, line))
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
