"""Free-space advisor: how far the vehicle can go in a set of directions.

The advisor only hands out boundary points, never the drivable map itself, so
the controller cannot adapt to the monitor's internals.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fov import line_offsets
from .grid_map import GridMap, WorldPoint
from .reachability import CellClass, DrivableMap
from .vehicle import VehicleState

FRONT = 0.0
LEFT = math.pi / 2
REAR = math.pi
RIGHT = -math.pi / 2


@dataclass(frozen=True)
class AdvisorRequest:
    """Ray headings in the vehicle frame (rad) and the buffer to keep (m)."""

    directions: tuple[float, ...]
    buffer: float = 0.0

    def __post_init__(self) -> None:
        if len(self.directions) == 0:
            raise ValueError("an advisor request needs at least one direction")
        if not self.buffer >= 0:
            raise ValueError(f"buffer must be non-negative, got {self.buffer}")
        object.__setattr__(self, "directions", tuple(float(d) for d in self.directions))


class Boundary(NamedTuple):
    heading: float
    point: WorldPoint
    distance: float


@dataclass(frozen=True)
class BoundarySet:
    """Free-space boundary per requested direction, in request order."""

    entries: tuple[Boundary, ...]

    def distances(self) -> np.ndarray:
        return np.array([entry.distance for entry in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def default_request(
    buffer: float = 0.0,
    reference_heading: float | None = None,
    vehicle_heading: float = 0.0,
) -> AdvisorRequest:
    """Front, rear, left and right rays, plus one along the reference path.

    Args:
        buffer: Distance to keep from potentially occupied cells (m).
        reference_heading: World heading of the reference path; adds a fifth
            ray along it when given.
        vehicle_heading: Current vehicle heading, used to express the
            reference heading in the vehicle frame.
    """
    directions = [FRONT, REAR, LEFT, RIGHT]
    if reference_heading is not None:
        directions.append(reference_heading - vehicle_heading)
    return AdvisorRequest(tuple(directions), buffer)


def _distance_to_map_edge(
    grid: GridMap, x: float, y: float, dx: float, dy: float
) -> float:
    x_min, y_min, x_max, y_max = grid.extent
    t = math.inf
    if dx > 1e-12:
        t = min(t, (x_max - x) / dx)
    elif dx < -1e-12:
        t = min(t, (x_min - x) / dx)
    if dy > 1e-12:
        t = min(t, (y_max - y) / dy)
    elif dy < -1e-12:
        t = min(t, (y_min - y) / dy)
    return max(t, 0.0)


def _distance_to_cell(grid: GridMap, x: float, y: float, col: int, row: int) -> float:
    """Euclidean distance from (x, y) to the nearest point of a cell."""
    res = grid.resolution
    x0 = grid.origin.x + col * res
    y0 = grid.origin.y + row * res
    dx = max(x0 - x, 0.0, x - (x0 + res))
    dy = max(y0 - y, 0.0, y - (y0 + res))
    return math.hypot(dx, dy)


def cast_direction(
    dmap: DrivableMap, pose: VehicleState, heading: float, buffer: float = 0.0
) -> tuple[WorldPoint, float]:
    """Free distance from the center of gravity along one direction.

    Casts a Bresenham ray from the CoG cell to the map edge along the world
    heading ``pose.psi + heading`` and stops at the first cell that is not
    safely drivable. The distance is measured to that cell's nearest edge and
    reduced by ``buffer``, never below zero. Without an obstruction it is the
    distance to the map edge.

    Returns:
        The boundary point and the free distance (m). Both collapse onto the
        CoG with distance 0 if the CoG cell itself is not safely drivable.
    """
    grid = dmap.grid
    x, y = pose.x, pose.y
    origin = WorldPoint(x, y)
    if not grid.contains(origin):
        return origin, 0.0

    res = grid.resolution
    start = np.array(
        [
            min(math.floor((x - grid.origin.x) / res), grid.width - 1),
            min(math.floor((y - grid.origin.y) / res), grid.height - 1),
        ]
    )
    if dmap.classes[start[1], start[0]] != CellClass.SAFE_DRIVABLE:
        return origin, 0.0

    theta = pose.psi + heading
    dx, dy = math.cos(theta), math.sin(theta)
    edge = _distance_to_map_edge(grid, x, y, dx, dy)
    end_x, end_y = x + edge * dx, y + edge * dy
    end = np.array(
        [
            min(max(math.floor((end_x - grid.origin.x) / res), 0), grid.width - 1),
            min(max(math.floor((end_y - grid.origin.y) / res), 0), grid.height - 1),
        ]
    )

    offsets, lengths = line_offsets((end - start)[None, :])
    cells = offsets[0, : lengths[0]] + start
    blocked = dmap.classes[cells[:, 1], cells[:, 0]] != CellClass.SAFE_DRIVABLE
    if blocked.any():
        col, row = cells[int(blocked.argmax())]
        distance = _distance_to_cell(grid, x, y, int(col), int(row))
    else:
        distance = edge

    distance = max(distance - buffer, 0.0)
    return WorldPoint(x + distance * dx, y + distance * dy), distance


def advise(dmap: DrivableMap, pose: VehicleState, req: AdvisorRequest) -> BoundarySet:
    """Cast every requested direction, keeping the request order."""
    entries = []
    for heading in req.directions:
        point, distance = cast_direction(dmap, pose, heading, req.buffer)
        entries.append(Boundary(heading, point, distance))
    return BoundarySet(tuple(entries))
