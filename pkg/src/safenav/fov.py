"""Field of view of the vehicle's virtual sensors on the static grid.

Four sensors sit on the vehicle (front center, rear center, left and right
side). Each one casts a Bresenham ray towards every perimeter cell of the grid
and sees every cell up to, and including, the first blocking cell. Range is
unlimited within line of sight.

The line used here is the symmetric variant: cell k of the line from a to b is
``a + floor((2·k·d + D) / (2·D))`` per axis, with ``d = b - a`` and
``D = max(|dx|, |dy|)``. Ties round towards +inf in absolute coordinates, which
makes the line from a to b and the line from b to a the same cell set.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import MapBoundsError
from .grid_map import GridIndex, GridMap, WorldPoint, world_to_cell
from .vehicle import VehicleParams, VehicleState


class SensorMount(NamedTuple):
    """Sensor position in the vehicle frame (m, lateral positive to the left)."""

    longitudinal: float
    lateral: float


@dataclass(frozen=True, eq=False)
class FovMap:
    """Per-cell visibility, True where visible."""

    visible: np.ndarray

    @property
    def occluded(self) -> np.ndarray:
        return ~self.visible

    def is_visible(self, i: GridIndex | tuple[int, int]) -> bool:
        return bool(self.visible[i[1], i[0]])


def sensor_mounts(params: VehicleParams) -> tuple[SensorMount, ...]:
    """Front, rear, left and right sensor mounts."""
    return (
        SensorMount(params.l_f, 0.0),
        SensorMount(-params.l_r, 0.0),
        SensorMount(0.0, params.width / 2),
        SensorMount(0.0, -params.width / 2),
    )


def sensor_positions(
    state: VehicleState, params: VehicleParams
) -> tuple[WorldPoint, WorldPoint, WorldPoint, WorldPoint]:
    """World positions of the front, rear, left and right sensors."""
    cos_p, sin_p = np.cos(state.psi), np.sin(state.psi)
    return tuple(
        WorldPoint(
            float(state.x + m.longitudinal * cos_p - m.lateral * sin_p),
            float(state.y + m.longitudinal * sin_p + m.lateral * cos_p),
        )
        for m in sensor_mounts(params)
    )


def line_offsets(deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell offsets of lines from the origin to each (dx, dy) in ``deltas``.

    Returns:
        Offsets of shape (n, L, 2) where L = max length over all lines (shorter
        lines repeat their end cell), and the per-line lengths D + 1.
    """
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.int64))
    span = np.abs(deltas).max(axis=1)
    k = np.arange(int(span.max()) + 1 if span.size else 1)
    k = np.minimum(k[None, :], span[:, None])
    denominator = np.maximum(2 * span, 1)[:, None, None]
    numerator = 2 * k[:, :, None] * deltas[:, None, :] + span[:, None, None]
    return numerator // denominator, span + 1


def bresenham_line(
    start: GridIndex | tuple[int, int], end: GridIndex | tuple[int, int]
) -> list[GridIndex]:
    """Cells of the symmetric Bresenham line from start to end, both included."""
    delta = np.array([[end[0] - start[0], end[1] - start[1]]])
    offsets, lengths = line_offsets(delta)
    cells = offsets[0, : lengths[0]] + np.asarray(start)
    return [GridIndex(int(c), int(r)) for c, r in cells]


def trace_ray(
    grid: GridMap, start: GridIndex | tuple[int, int], end: GridIndex | tuple[int, int]
) -> list[GridIndex]:
    """Line of sight from start towards end, truncated at the first blocker.

    The blocking cell itself is part of the result; so is ``start``.

    Raises:
        MapBoundsError: If either endpoint is outside the grid.
    """
    for endpoint in (start, end):
        if not grid.in_bounds(endpoint):
            raise MapBoundsError(f"ray endpoint {tuple(endpoint)} outside the grid")
    line = bresenham_line(start, end)
    blocking = grid.blocking_mask()
    for k, (col, row) in enumerate(line):
        if blocking[row, col]:
            return line[: k + 1]
    return line


def perimeter_cells(grid: GridMap) -> np.ndarray:
    """All boundary cells of the grid as (col, row) rows, without duplicates."""
    cols = np.arange(grid.width)
    rows = np.arange(grid.height)
    edges = [
        np.column_stack([cols, np.zeros_like(cols)]),
        np.column_stack([cols, np.full_like(cols, grid.height - 1)]),
        np.column_stack([np.zeros_like(rows), rows]),
        np.column_stack([np.full_like(rows, grid.width - 1), rows]),
    ]
    return np.unique(np.concatenate(edges), axis=0)


def cast_rays(
    blocking: np.ndarray, start: GridIndex | tuple[int, int], targets: np.ndarray
) -> np.ndarray:
    """Mark every cell seen along the rays from start to each target.

    Args:
        blocking: Boolean (height, width) mask of blocking cells.
        start: Ray origin (col, row), inside the grid.
        targets: Target cells (n, 2) as (col, row), inside the grid.

    Returns:
        Boolean (height, width) mask of cells reached before truncation.
    """
    offsets, lengths = line_offsets(targets - np.asarray(start))
    cols = offsets[..., 0] + start[0]
    rows = offsets[..., 1] + start[1]
    hits = blocking[rows, cols]
    steps = np.arange(cols.shape[1])[None, :]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), cols.shape[1])
    reach = np.minimum(first_hit, lengths - 1)
    seen = steps <= reach[:, None]
    visible = np.zeros(blocking.shape, dtype=bool)
    visible[rows[seen], cols[seen]] = True
    return visible


def compute_fov(grid: GridMap, state: VehicleState, params: VehicleParams) -> FovMap:
    """Visibility map from the four virtual sensors.

    Raises:
        MapBoundsError: If a sensor or the center of gravity lies outside the
            map extent.
    """
    sensors = [world_to_cell(grid, p) for p in sensor_positions(state, params)]
    own_cell = world_to_cell(grid, (state.x, state.y))
    blocking = grid.blocking_mask()
    targets = perimeter_cells(grid)

    visible = np.zeros(grid.shape, dtype=bool)
    for sensor in sensors:
        visible |= cast_rays(blocking, sensor, targets)
    visible[own_cell.row, own_cell.col] = True
    return FovMap(visible=visible)


def format_fov(fov: FovMap) -> str:
    """ASCII rendering, northmost row first: ``*`` visible, ``o`` occluded."""
    chars = np.where(fov.visible, "*", "o")
    return "\n".join("".join(row) for row in chars[::-1]) + "\n"
