"""Synthetic garage fixture: map, reference paths and three scenario files.

The garage is 60 m x 40 m at 0.5 m resolution. A corridor enters from the
west and turns north at a 90° corner formed by occluding walls. West of the
north lane lies a room, open to the lane only north of the corner wall and
holding a pedestrian door. Parking slots line the east side of the lane.

Layout in world meters (origin at the south-west corner)::

    y=40 +----------------------------------------------+
         |E   room, parked row        |   lane  | slots |
         |                            |         |  V    |
         |                       wall |         |  V    |
    y=10 |-------------------------+--+         |  V    |
         |  corridor  ->                        |       |
    y=0  +----------------------------------------------+
"""

import math
from pathlib import Path

import numpy as np
import yaml

from .grid_map import GridMap, StaticCell, WorldPoint, format_static_map
from .reference import ReferencePath, build_turtle_path, format_path
from .utils import get_logger

logger = get_logger(__name__)

RESOLUTION = 0.5
WIDTH = 120
HEIGHT = 80
PATH_SPACING = 0.2
TURN_RADIUS = 4.0

# east parking: slot depth along x, slot pitch along y, parked body size
SLOT_X = (41.0, 46.0)
SLOT_PITCH = 2.5
SLOT_Y0 = 12.0
N_SLOTS = 10
FREE_SLOT = 4

ROUTE_START = (3.0, 6.0, 0.0)
PULL_OUT_START = (43.9, SLOT_Y0 + (FREE_SLOT + 0.5) * SLOT_PITCH, math.pi)


def _fill(
    cells: np.ndarray, x0: float, y0: float, x1: float, y1: float, value: int
) -> None:
    """Set every cell whose center lies in [x0, x1] x [y0, y1] (meters)."""
    c0, c1 = math.ceil(x0 / RESOLUTION - 0.5), math.floor(x1 / RESOLUTION - 0.5)
    r0, r1 = math.ceil(y0 / RESOLUTION - 0.5), math.floor(y1 / RESOLUTION - 0.5)
    rows = slice(max(r0, 0), min(r1, HEIGHT - 1) + 1)
    cols = slice(max(c0, 0), min(c1, WIDTH - 1) + 1)
    cells[rows, cols] = value


def slot_center(index: int) -> float:
    """World y (m) of the center of an east parking slot."""
    return SLOT_Y0 + (index + 0.5) * SLOT_PITCH


def build_garage_map(parked: bool = True) -> GridMap:
    """The garage grid, optionally with parked vehicles.

    Args:
        parked: Place parked vehicles in the room and in every east slot
            except the free one.
    """
    cells = np.full((HEIGHT, WIDTH), StaticCell.FREE, dtype=np.int8)
    wall = StaticCell.WALL

    # outer walls
    cells[0, :] = cells[-1, :] = wall
    cells[:, 0] = cells[:, -1] = wall
    # corridor ceiling and the corner wall hiding the room
    _fill(cells, 0.0, 10.0, 31.0, 11.0, wall)
    _fill(cells, 30.0, 10.0, 31.0, 24.0, wall)
    # pedestrian door into the room
    _fill(cells, 0.0, 30.0, 0.5, 32.0, StaticCell.ENTRANCE)
    # divider between the lane and the east parking
    _fill(cells, 46.5, 0.5, 47.5, 39.5, wall)

    if parked:
        for k in range(N_SLOTS):
            if k == FREE_SLOT:
                continue
            y = slot_center(k)
            x0, x1 = SLOT_X[0] + 0.5, SLOT_X[1] - 0.5
            _fill(cells, x0, y - 1.0, x1, y + 1.0, StaticCell.PARKED_VEHICLE)
        for x in np.arange(3.0, 27.0, 3.0):
            _fill(cells, x, 33.0, x + 2.0, 37.5, StaticCell.PARKED_VEHICLE)

    return GridMap(WIDTH, HEIGHT, RESOLUTION, WorldPoint(0.0, 0.0), cells)


def _quarter_turn() -> tuple[float, float]:
    """Left 90° arc of about TURN_RADIUS as a whole number of steps."""
    steps = round(TURN_RADIUS * math.pi / 2 / PATH_SPACING)
    length = steps * PATH_SPACING
    return length, (math.pi / 2) / length


def route_path() -> ReferencePath:
    """Corridor entry, left turn at the corner, up the lane."""
    x0, _, _ = ROUTE_START
    lane_x = 35.4
    straight = lane_x - TURN_RADIUS - x0
    return build_turtle_path(
        ROUTE_START,
        [
            (straight, 0.0),
            _quarter_turn(),
            (14.0, 0.0),
        ],
        PATH_SPACING,
    )


def pull_out_path() -> ReferencePath:
    """Leave the free slot heading west, then turn south into the lane."""
    return build_turtle_path(
        PULL_OUT_START,
        [
            (2.0, 0.0),
            _quarter_turn(),
            (4.0, 0.0),
        ],
        PATH_SPACING,
    )


def garage_scenarios() -> dict[str, dict]:
    """Scenario documents keyed by file stem."""
    route_start = dict(zip(("x", "y", "psi"), ROUTE_START, strict=True), v=0.0)
    return {
        "scenario_a": {
            "name": "empty_garage",
            "map": "garage_empty.map",
            "path": "route.path",
            "start": route_start,
        },
        "scenario_b": {
            "name": "parked_and_pedestrians",
            "map": "garage.map",
            "path": "route.path",
            "start": route_start,
            "pedestrians": [
                {
                    "x": 25.0,
                    "y": 28.0,
                    "tracked": False,
                    "footprint": 1.0,
                    "script": [
                        {"until": 4.0, "vx": 1.0, "vy": 0.0},
                        {"until": None, "vx": 0.0, "vy": 0.0},
                    ],
                },
                {"x": 44.0, "y": 38.0, "tracked": True, "footprint": 1.0},
            ],
        },
        "scenario_c": {
            "name": "pull_out",
            "map": "garage.map",
            "path": "pull_out.path",
            "start": {
                "x": PULL_OUT_START[0],
                "y": PULL_OUT_START[1],
                "psi": PULL_OUT_START[2],
                "v": 0.0,
            },
        },
    }


def write_garage(out_dir: str | Path) -> list[Path]:
    """Write both maps, both paths and the three scenario files.

    Returns:
        The written scenario files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "garage.map").write_text(format_static_map(build_garage_map(True)))
    empty = format_static_map(build_garage_map(parked=False))
    (out_dir / "garage_empty.map").write_text(empty)
    (out_dir / "route.path").write_text(format_path(route_path()))
    (out_dir / "pull_out.path").write_text(format_path(pull_out_path()))

    written = []
    for stem, scenario in garage_scenarios().items():
        file = out_dir / f"{stem}.yaml"
        with open(file, "w", encoding="utf-8") as f:
            yaml.safe_dump(scenario, f, sort_keys=False)
        written.append(file)
    logger.info("Wrote garage fixture with %d scenarios to %s", len(written), out_dir)
    return written
