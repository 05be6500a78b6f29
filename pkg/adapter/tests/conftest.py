import pytest

_criterion_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria (adapter)")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture()
def acceptance():
    def check(tag: str, ok: bool, detail: str) -> None:
        _criterion_lines.append(f"{tag} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"{tag}: {detail}"
    return check
