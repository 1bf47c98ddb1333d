import pytest

ACCEPTANCE = {}


@pytest.fixture
def report():
    """report(k, ok, detail) records one acceptance line and prints it."""

    def _report(k, ok, detail):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE[k] = line
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
