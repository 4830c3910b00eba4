"""End-to-end acceptance criteria at their stated tolerances and time budgets.

Each criterion prints one pass/fail line; the lines are repeated in the
terminal summary so they survive output capture.
"""

import numpy as np
import pytest

from tonelli_lab.acceptance import CRITERIA, SEED

ACCEPTANCE_LINES = []


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(criterion):
    np.random.seed(SEED)
    result = criterion()
    line = result.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    for c in result.checks:
        print(f"    {c.name}: {c.value:.6g} (limit {c.limit}) {'ok' if c.passed else 'FAILED'}")
    assert result.error is None, result.error
    assert all(c.passed for c in result.checks), line
    assert result.within_budget, line
