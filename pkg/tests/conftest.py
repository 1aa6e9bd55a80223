import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and assert it."""
    name = request.node.name

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {detail}"
        print(line)
        ACCEPTANCE_LINES[name] = (n, line)
        assert ok, line

    yield record
    if name not in ACCEPTANCE_LINES:
        ACCEPTANCE_LINES[name] = (99, f"FAIL  {name}: raised before reaching a verdict")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES.values()):
        terminalreporter.write_line(line)
