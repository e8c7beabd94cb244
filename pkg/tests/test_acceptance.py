"""Acceptance criteria at their fixed tolerances, one test per criterion."""
import pytest

from conftest import ACCEPTANCE_LINES
from corrsel.acceptance import CRITERIA, SEED

SLOW = {8}


@pytest.mark.parametrize("cid", [pytest.param(c, marks=pytest.mark.slow) if c in SLOW else c
                                 for c in sorted(CRITERIA)])
def test_criterion(cid):
    res = CRITERIA[cid](SEED)
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed, line
