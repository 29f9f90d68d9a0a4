"""Acceptance criteria 1-12 at their pre-registered parameters and seed 0.

Each test prints one PASS/FAIL line; the lines are repeated in the
terminal summary.  The full set takes one to two hours on one core;
``SAUSAGE_WORKERS`` spreads the pooled criteria over processes.
"""
import json

import pytest

from conftest import ACCEPTANCE_LINES
from sausage.acceptance import CRITERIA, FAST, _guard_check, _timed
from sausage.config import default_workers

SEED = 0


def _report(check):
    line = f"{check.line()}  ({check.seconds:.0f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    print(json.dumps(check.measured, default=str)[:2000])


@pytest.mark.acceptance
def test_guards_and_round_trip():
    check = _timed("T0", "guards and config round-trip", _guard_check, SEED)
    _report(check)
    assert check.passed


def _marks(k):
    marks = [pytest.mark.acceptance]
    if k not in FAST:
        marks.append(pytest.mark.slow)
    return marks


@pytest.mark.parametrize("k", [pytest.param(k, marks=_marks(k), id=f"C{k}") for k in CRITERIA])
def test_criterion(k):
    check = CRITERIA[k](SEED, default_workers())
    _report(check)
    assert check.passed, check.line()
