from contextlib import contextmanager

import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


class _Outcome:
    detail = ""


@pytest.fixture
def criterion():
    """Context manager that records one pass/fail line per acceptance criterion."""

    @contextmanager
    def run(number: int, title: str):
        outcome = _Outcome()
        try:
            yield outcome
        except BaseException as exc:
            _RESULTS[number] = (title, False, outcome.detail or f"{type(exc).__name__}: {exc}".splitlines()[0])
            raise
        _RESULTS[number] = (title, True, outcome.detail)
        print(f"criterion {number} PASS: {title} ({outcome.detail})")

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
