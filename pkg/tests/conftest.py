import contextlib

import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class Criterion:
    """Records one acceptance criterion's outcome for the end-of-run summary."""

    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def note(self, text: str) -> None:
        self.detail = f"{self.detail}; {text}" if self.detail else text

    @contextlib.contextmanager
    def check(self):
        try:
            yield self
        except BaseException as exc:
            _CRITERIA[self.number] = (self.title, False, f"{self.detail} | {type(exc).__name__}: {exc}".strip())
            raise
        _CRITERIA[self.number] = (self.title, True, self.detail)


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        first = detail.splitlines()[0] if detail else ""
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} ({first})")
