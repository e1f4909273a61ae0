import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, message)`` for the acceptance summary."""

    def record(number: int, passed: bool, message: str = ""):
        _CRITERIA.setdefault(number, []).append((bool(passed), message))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {message}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        ok = all(p for p, _ in parts)
        msg = "; ".join(m for _, m in parts if m)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
