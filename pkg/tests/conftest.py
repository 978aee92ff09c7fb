import pytest

# Acceptance verdicts collected by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def verdict(request):
    """Record a criterion verdict line; the test still asserts on its own."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES[label] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[label])
