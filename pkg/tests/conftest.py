import pytest
from hypothesis import settings

# timing varies on a shared single core; correctness, not speed, is under test here
settings.register_profile("nneq", deadline=None)
settings.load_profile("nneq")

_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(ok, detail)."""

    def record(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
