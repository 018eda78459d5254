"""Shared, session-scoped runs (continuations and the IDE iteration are the slow parts)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

import pytest

from meromorphic_dde.continuation_engine import continue_patch, series_patch
from meromorphic_dde.patch import StripRegion
from meromorphic_dde.series_core import DDEParameters, formal_solution
from meromorphic_dde.special_functions import Lattice, mu0_solution

LATTICE = Lattice(3, 3j)
X0 = 0.31 + 1.4j
A = 1.0

_ACCEPTANCE_LINES: list[str] = []


@dataclass
class TimedRun:
    result: object
    seconds: float


@pytest.fixture(scope="session")
def mu0_run():
    """mu = 0 elliptic seed on a pole-free strip, 3 slabs each way."""
    seed = mu0_solution(LATTICE, X0, A, StripRegion((0.81, 1.81), -1.0, 2.0))
    t = time.perf_counter()
    res = continue_patch(seed, DDEParameters(Fraction(1), Fraction(0)), 3, 3)
    return TimedRun(res, time.perf_counter() - t)


@pytest.fixture(scope="session")
def mu_neg_run():
    """mu = -1, '-' branch, series seed at Re z ~ 8, 12 slabs leftward."""
    p = DDEParameters(Fraction(1), Fraction(-1))
    fs = formal_solution(p, "-", K=60, kind="mp")
    seed = series_patch(fs, StripRegion((7.5, 8.5), -3.0, 3.0))
    t = time.perf_counter()
    res = continue_patch(seed, p, 0, 12)
    return TimedRun(res, time.perf_counter() - t)


@pytest.fixture(scope="session")
def ide_runs():
    """IDE iteration at the calibrated z0 = 9 plus the operator norm at 4 z0."""
    from meromorphic_dde.ide_solver import HalfPlaneGrid, operator_norm_I, iterate

    p = DDEParameters(Fraction(1), Fraction(-1))
    t = time.perf_counter()
    st = iterate(p, "-", 9.0, n_iters=5)
    norm_far = operator_norm_I(HalfPlaneGrid(36.0), -1.0)
    return TimedRun((st, norm_far), time.perf_counter() - t)


@pytest.fixture
def acceptance_line():
    """Record a one-line verdict; all lines are repeated in the terminal summary."""
    def emit(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
