from __future__ import annotations

import itertools

import numpy as np
import pytest


def brute_force_regular(n: int, d: int) -> set[tuple]:
    """All labeled simple d-regular graphs on n vertices, by scanning edge subsets."""
    pairs = list(itertools.combinations(range(n), 2))
    out = set()
    for subset in itertools.combinations(pairs, n * d // 2):
        deg = np.zeros(n, dtype=int)
        for i, j in subset:
            deg[i] += 1
            deg[j] += 1
        if np.all(deg == d):
            out.add(tuple(subset))
    return out


@pytest.fixture(scope="session")
def oracle_63():
    return brute_force_regular(6, 3)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
