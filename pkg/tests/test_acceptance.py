"""The ten acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line (shown even under output capture) and
then asserts every gate of its criterion.  Run standalone with
``python tests/test_acceptance.py`` for the bare summary.
"""

import sys

import pytest

from critflow.acceptance import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name, capsys):
    res = CRITERIA[name]()
    with capsys.disabled():
        print(f"\n{res.line()}")
    failed = [d for d, ok in res.gates if not ok]
    assert res.passed, f"{res.name}: {failed}"


if __name__ == "__main__":
    results = [fn() for fn in CRITERIA.values()]
    for res in results:
        print(res.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
