"""The acceptance sweep, one test per criterion.

Each test prints its pass/fail line straight to the terminal; thresholds
live in udclab.acceptance next to the sweeps that use them.
"""

import pytest

from udclab.acceptance import CRITERIA, criterion_12

RESULTS = {}


def _report(capsys, result):
    with capsys.disabled():
        print("\n" + result.line())


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = CRITERIA[number]()
    RESULTS[number] = result
    _report(capsys, result)
    assert result.passed, result.detail


def test_criterion_12_determinism(capsys):
    first = {k: RESULTS.get(k) or CRITERIA[k]() for k in sorted(CRITERIA)}
    result = criterion_12(first)
    _report(capsys, result)
    assert result.passed, result.detail
