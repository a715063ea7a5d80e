"""Acceptance criteria at full scale, one printed pass/fail line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the lines as they
are produced; the same lines come from ``randiso verify --level full``.
"""

import pytest

from randiso.acceptance import CRITERIA, format_line, run_suite


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion{n:02d}")
def test_criterion(number, capsys):
    (result,) = run_suite("full", only=[number], out=lambda s: None)
    line = format_line(result)
    with capsys.disabled():
        print(f"\n{line}")
    assert result.passed, line
