from __future__ import annotations

import numpy as np
import pytest

from randbell import sampling

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_report():
    """Record one line per acceptance criterion for the terminal summary."""

    def report(label: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((label, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")


def random_dirs(seed: int, count: int, n: int, mode: str = "rim") -> np.ndarray:
    u = sampling.uniform_rows(seed, 0, count, n * sampling.draws_per_party(mode))
    return sampling.frames_from_uniforms(u, n, mode)
