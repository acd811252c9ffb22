import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[key])


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records the verdict line and then asserts it."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA_LINES[number] = line
        print(line)
        assert passed, line

    return record
