import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records an acceptance verdict and asserts it."""

    def record(number, ok, detail):
        _RESULTS[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")
