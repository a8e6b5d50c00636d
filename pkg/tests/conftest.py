import json
import math
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def oracle():
    return json.loads((DATA / "oracle.json").read_text())


def frac(s: str) -> float:
    num, _, den = s.partition("/")
    return float(num) / float(den) if den else float(num)


def brute_convolution(positions, weights, kernel, points):
    """O(P * Q) reference for sum_i w_i eta(x - x_i)."""
    x = np.asarray(positions, dtype=float)
    w = np.asarray(weights, dtype=float)
    return np.array([float(np.sum(w * kernel(q - x))) for q in np.asarray(points, dtype=float)])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


def finite(x) -> bool:
    return math.isfinite(x)
