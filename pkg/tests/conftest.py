"""Pytest configuration for safenav tests."""

from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from safenav.grid_map import GridMap, WorldPoint, format_static_map
from safenav.reference import build_turtle_path, format_path


def pytest_generate_tests(metafunc: Any) -> None:
    """Automatically parametrize all tests over the available QP backends.

    This hook runs for every test function and adds solver parametrization
    if the test accepts a 'solver' parameter.

    The embedded "admm" solver always runs. "osqp" and "gurobi" are added
    when they can be imported.
    """
    if "solver" in metafunc.fixturenames:
        solvers = ["admm"]
        try:
            import osqp  # noqa: F401

            solvers.append("osqp")
        except ImportError:
            pass
        try:
            import gurobipy  # noqa: F401

            solvers.append("gurobi")
        except ImportError:
            pass

        metafunc.parametrize("solver", solvers)


@pytest.fixture
def room_scenario(tmp_path: Path) -> Path:
    """Open 20 m x 10 m room, a 12 m straight path and a 5-tick scenario file."""
    grid = GridMap(40, 20, 0.5, WorldPoint(0.0, 0.0), np.zeros((20, 40)))
    (tmp_path / "room.map").write_text(format_static_map(grid))
    path = build_turtle_path((3.0, 5.0, 0.0), [(12.0, 0.0)], 0.2)
    (tmp_path / "straight.path").write_text(format_path(path))
    scenario = {
        "map": "room.map",
        "path": "straight.path",
        "start": {"x": 3.0, "y": 5.0, "psi": 0.0, "v": 0.0},
        "tick_limit": 5,
    }
    file = tmp_path / "room.yaml"
    file.write_text(yaml.safe_dump(scenario))
    return file
