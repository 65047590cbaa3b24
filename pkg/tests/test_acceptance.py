"""Acceptance criteria at their stated tolerances; each test prints one result line."""

import pytest

from qclausius.harness.acceptance import CRITERIA

_elapsed = []


@pytest.mark.parametrize("number", sorted(n for n in CRITERIA if n != 11))
def test_criterion(number):
    res = CRITERIA[number]()
    _elapsed.append(res.seconds)
    print("\n" + res.line)
    assert res.passed, res.detail


def test_criterion_11_performance():
    # runs after the others, so the suite total includes them
    res = CRITERIA[11](suite_elapsed=sum(_elapsed) if len(_elapsed) == len(CRITERIA) - 1 else None)
    print("\n" + res.line)
    assert res.passed, res.detail
