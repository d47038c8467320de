import pytest

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_record():
    """Callable recording (criterion, passed, detail) for the end-of-run summary."""
    def record(key, passed, detail):
        _ACCEPTANCE[key] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
