import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class Gate:
    """Collects one verdict line per acceptance criterion."""

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        _VERDICTS.append((name, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def gate() -> Gate:
    return Gate()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
