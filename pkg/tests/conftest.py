import time
from contextlib import contextmanager

import numpy as np
import pytest

# criterion number -> (title, passed, detail); filled by test_acceptance
CRITERIA: dict[int, tuple[str, bool, str]] = {}


class _Outcome:
    def __init__(self):
        self.detail = ""
        self.elapsed = 0.0


@contextmanager
def criterion(number: int, title: str, budget_s: float):
    """Record pass/fail for one acceptance criterion, including its time budget."""
    out = _Outcome()
    start = time.perf_counter()
    try:
        yield out
    except BaseException as exc:
        out.elapsed = time.perf_counter() - start
        CRITERIA[number] = (title, False, f"{out.detail} | {type(exc).__name__}: {exc}".strip(" |"))
        raise
    out.elapsed = time.perf_counter() - start
    if out.elapsed > budget_s:
        CRITERIA[number] = (title, False, f"{out.detail} | {out.elapsed:.2f}s > {budget_s:g}s")
        pytest.fail(f"criterion {number} took {out.elapsed:.2f}s, budget {budget_s:g}s")
    CRITERIA[number] = (title, True, f"{out.detail} | {out.elapsed:.2f}s")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
