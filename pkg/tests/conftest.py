from __future__ import annotations

import pytest

from annuitize.boundary import solve
from annuitize.cli import load_config

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def problem(preset: str):
    return load_config(preset=preset).problem()


@pytest.fixture(scope="session")
def upper():
    """f = 1.2, K = 2: stop above."""
    cfg = problem("a-f12-K2")
    return solve(cfg, 600)


@pytest.fixture(scope="session")
def lower():
    """f = 0.8, K = -2: stop below."""
    cfg = problem("a-f08-Kneg2")
    return solve(cfg, 600)
