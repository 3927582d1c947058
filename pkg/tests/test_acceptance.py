"""All ten acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run this file directly for the same lines without pytest.
"""
import pytest

import avgproc.limit_pde as lp
from avgproc import acceptance

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script from elsewhere
    ACCEPTANCE_LINES = []


def _check(result):
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    details = "; ".join(f"{m.name}={m.value:.4g} (tol {m.tolerance})" for m in result.metrics)
    assert result.passed, f"{line}\n{details}"


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    _check(acceptance.CRITERIA[number - 1]())


@pytest.mark.slow
def test_rk4_tampering_fails_cauchy_criterion(monkeypatch):
    monkeypatch.setattr(lp, "RK4_WEIGHTS", (1 / 6, 1 / 3, 1 / 3, 1 / 5))
    res = acceptance.criterion_4()
    failed = {m.name for m in res.metrics if m.graded and not m.passed}
    assert not res.passed
    assert "decaying_c1_sup_error" in failed


if __name__ == "__main__":
    for fn in acceptance.CRITERIA:
        print(fn().line(), flush=True)
