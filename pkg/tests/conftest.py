import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance_line():
    """Record the single summary line for an acceptance criterion."""
    def record(number, ok, detail):
        _ACCEPTANCE[number] = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        print(_ACCEPTANCE[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
