"""One test per acceptance criterion at the bundled resolution.

Each test prints a single PASS/FAIL line; the same lines are repeated in the
terminal summary so they survive output capture.
"""

import pytest

from heleshaw.acceptance import CRITERIA, Context, run_criterion

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="module")
def ctx():
    return Context()


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: f"c{c.number:02d}_{c.title.split()[0].lower()}")
def test_criterion(criterion, ctx):
    result = run_criterion(criterion, ctx)
    line = result.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    failures = [f"{r.quantity} {r.params}: measured {r.measured:.6g} > {r.bound:.6g} + {r.slack:.3g}"
                for r in result.reports if not r.passed]
    assert result.passed, "\n".join([line] + failures[:10])
