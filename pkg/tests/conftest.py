import numpy as np
import pytest

from fbx.grid import Grid, ScalarField

# (criterion, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{crit} {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def unit_grid():
    return Grid.covering(0.0, 1.0, 0.0, 1.0, 0.25)


def field_from(grid, fn, mask=None):
    X, Y = grid.mesh()
    return ScalarField(grid, np.maximum(fn(X, Y), 0.0), mask)
