import contextlib

import pytest

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriterionRecorder:
    @contextlib.contextmanager
    def __call__(self, number: int, title: str):
        try:
            yield
        except BaseException as exc:
            _CRITERIA[number] = (title, False, f"{type(exc).__name__}: {exc}".splitlines()[0])
            raise
        else:
            _CRITERIA[number] = (title, True, "")


@pytest.fixture
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, note = _CRITERIA[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}"
        if note:
            line += f"  ({note})"
        terminalreporter.write_line(line)
