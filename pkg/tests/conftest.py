import sys

import numpy as np
import pytest

from heleshaw.geometry import GridSpec, Scenario, rasterize_scenario


def scenario(base, modifiers=(), d=1, name="t"):
    return Scenario.from_dict({"name": name, "d": d, "base_graph": base, "modifiers": list(modifiers)})


FLAT = {"kind": "constant", "params": {"value": 0.0}}


@pytest.fixture
def small_grid():
    return GridSpec(1, 0.5, 1.5, 1.5, 1 / 16)


@pytest.fixture
def flat_field(small_grid):
    return rasterize_scenario(scenario(FLAT), small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
