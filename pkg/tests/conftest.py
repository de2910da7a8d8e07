import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


class CriterionRecorder:
    """Records one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def __call__(self, number: int, ok: bool, detail: str) -> None:
        if number in _CRITERIA:  # parametrized criterion: all parts must pass
            prev_ok, prev_detail = _CRITERIA[number]
            ok, detail = prev_ok and ok, f"{prev_detail}; {detail}"
        _CRITERIA[number] = (ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


@pytest.fixture
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
