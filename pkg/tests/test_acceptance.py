"""The thirteen acceptance criteria, one test each, at their stated tolerances.

Each test records its one-line verdict; the lines are printed together in the
terminal summary (see conftest.py) so a plain ``pytest -v`` run shows them.
"""
import pytest

from lpkernels import verify

RESULTS: list = []


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(verify.CRITERIA))
def test_criterion(number):
    result = verify.CRITERIA[number]()
    line = f"{result.line()}  ({result.seconds:.1f} s)"
    RESULTS.append(line)
    print(line)
    assert result.passed, f"{line}\n{result.detail}"
