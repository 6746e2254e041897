import pytest

_LINES = []


class _Recorder:
    def __call__(self, number, name, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _LINES.append((number, line))
        print(line)
        return ok


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary is printed at the end of the session."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
