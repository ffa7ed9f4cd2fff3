"""Acceptance battery at full size: one PASS/FAIL line per criterion.

The lines go straight to the terminal reporter so they show up in a plain
``pytest -v`` run. Monte Carlo criteria use 40,000 runs per cell and seed 1.
"""

from __future__ import annotations

import pytest

from fbai import acceptance


@pytest.fixture
def emit(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None:
        return print

    def write(line: str) -> None:
        reporter.write_line("")
        reporter.write_line(line)

    return write


@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(number, emit):
    result = acceptance.run_criterion(number, runs=acceptance.DEFAULT_RUNS, seed=1, emit=emit)
    assert result.passed, result.line()
