"""Static occupancy grid of the environment.

Map file format::

    resolution 0.5
    origin 0.0 0.0
    #####
    #.E.#
    #.V.#
    #####

The first grid line is the northmost row. Grid indices are ``(col, row)`` with
``col`` growing with world ``x`` and ``row`` growing with world ``y``, so the
first grid line holds ``row = height - 1`` and the last one holds ``row = 0``.
"""

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import MapBoundsError, MapParseError


class StaticCell(IntEnum):
    """Static classification of one grid cell."""

    FREE = 0
    WALL = 1
    ENTRANCE = 2
    PARKED_VEHICLE = 3


CELL_CHARS = {
    StaticCell.FREE: ".",
    StaticCell.WALL: "#",
    StaticCell.ENTRANCE: "E",
    StaticCell.PARKED_VEHICLE: "V",
}
_CHAR_TO_CELL = {char: cell for cell, char in CELL_CHARS.items()}


class GridIndex(NamedTuple):
    col: int
    row: int


class WorldPoint(NamedTuple):
    x: float
    y: float


def is_blocking(cell: StaticCell | int) -> bool:
    """Return True for cells that stop line-of-sight rays.

    Walls and parked vehicles block. Free cells and entrances are transparent;
    entrances only matter as permanent pedestrian sources.
    """
    return cell in (StaticCell.WALL, StaticCell.PARKED_VEHICLE)


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable occupancy grid.

    Attributes:
        width: Number of columns.
        height: Number of rows.
        resolution: Edge length of a cell (m).
        origin: World coordinates of the outer corner of cell (0, 0).
        cells: Array of shape (height, width) holding StaticCell values,
            indexed ``cells[row, col]``.
    """

    width: int
    height: int
    resolution: float
    origin: WorldPoint
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"map dimensions must be positive, got {self.width}x{self.height}"
            )
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        cells = np.array(self.cells, dtype=np.int8)
        if cells.shape != (self.height, self.width):
            raise ValueError(
                f"cells has shape {cells.shape}, expected ({self.height}, {self.width})"
            )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", WorldPoint(*map(float, self.origin)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.cells, other.cells)
        )

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(height, width)`` shared by all per-cell maps."""
        return (self.height, self.width)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """World extent as ``(x_min, y_min, x_max, y_max)``."""
        x0, y0 = self.origin
        return (
            x0,
            y0,
            x0 + self.width * self.resolution,
            y0 + self.height * self.resolution,
        )

    def contains(self, p: WorldPoint | tuple[float, float]) -> bool:
        x_min, y_min, x_max, y_max = self.extent
        return x_min <= p[0] < x_max and y_min <= p[1] < y_max

    def in_bounds(self, i: GridIndex | tuple[int, int]) -> bool:
        return 0 <= i[0] < self.width and 0 <= i[1] < self.height

    def cell(self, i: GridIndex | tuple[int, int]) -> StaticCell:
        if not self.in_bounds(i):
            raise MapBoundsError(
                f"cell index {tuple(i)} outside {self.width}x{self.height}"
            )
        return StaticCell(int(self.cells[i[1], i[0]]))

    def blocking_mask(self) -> np.ndarray:
        """Boolean (height, width) mask of ray-blocking cells."""
        return np.isin(self.cells, (StaticCell.WALL, StaticCell.PARKED_VEHICLE))

    def with_cells(self, cells: np.ndarray) -> "GridMap":
        """Return a copy of this map with a different cell array."""
        return GridMap(self.width, self.height, self.resolution, self.origin, cells)


def world_to_cell(grid: GridMap, p: WorldPoint | tuple[float, float]) -> GridIndex:
    """Index of the cell containing a world point.

    Points on a shared edge belong to the higher-index cell.

    Raises:
        MapBoundsError: If the point lies outside the map extent.
    """
    if not grid.contains(p):
        raise MapBoundsError(f"point ({p[0]}, {p[1]}) outside map extent {grid.extent}")
    col = math.floor((p[0] - grid.origin.x) / grid.resolution)
    row = math.floor((p[1] - grid.origin.y) / grid.resolution)
    # Float rounding right below the upper edge can land one past the end.
    return GridIndex(min(col, grid.width - 1), min(row, grid.height - 1))


def cell_to_world(grid: GridMap, i: GridIndex | tuple[int, int]) -> WorldPoint:
    """World coordinates of a cell center.

    Raises:
        MapBoundsError: If the index is outside the grid.
    """
    if not grid.in_bounds(i):
        raise MapBoundsError(
            f"cell index {tuple(i)} outside {grid.width}x{grid.height}"
        )
    return WorldPoint(
        grid.origin.x + (i[0] + 0.5) * grid.resolution,
        grid.origin.y + (i[1] + 0.5) * grid.resolution,
    )


def _parse_header(line: str, line_no: int, key: str, n_values: int) -> list[float]:
    parts = line.split()
    if len(parts) != n_values + 1 or parts[0] != key:
        raise MapParseError(
            f"expected '{key}' followed by {n_values} number(s), got {line!r}", line_no
        )
    try:
        values = [float(v) for v in parts[1:]]
    except ValueError as err:
        raise MapParseError(f"invalid number in {line!r}", line_no) from err
    if not all(math.isfinite(v) for v in values):
        raise MapParseError(f"non-finite number in {line!r}", line_no)
    return values


def parse_static_map(text: str) -> GridMap:
    """Parse map text into a GridMap.

    Args:
        text: Map document (header plus character grid).

    Returns:
        The parsed map.

    Raises:
        MapParseError: On a malformed header, non-positive resolution, ragged
            rows, an empty grid, or an unknown cell character.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 3:
        raise MapParseError("expected a two-line header and at least one grid row", 1)

    (resolution,) = _parse_header(lines[0], 1, "resolution", 1)
    if resolution <= 0:
        raise MapParseError(f"resolution must be positive, got {resolution}", 1)
    origin = _parse_header(lines[1], 2, "origin", 2)

    grid_lines = lines[2:]
    width = len(grid_lines[0])
    if width == 0:
        raise MapParseError("empty grid row", 3)
    height = len(grid_lines)
    cells = np.empty((height, width), dtype=np.int8)

    for k, row_text in enumerate(grid_lines):
        line_no = k + 3
        if len(row_text) != width:
            raise MapParseError(
                f"grid row {k + 1} has {len(row_text)} cells, expected {width}",
                line_no,
            )
        row = height - 1 - k
        for col, char in enumerate(row_text):
            cell = _CHAR_TO_CELL.get(char)
            if cell is None:
                raise MapParseError(
                    f"unknown cell character {char!r}", line_no, col + 1
                )
            cells[row, col] = cell

    return GridMap(width, height, resolution, WorldPoint(*origin), cells)


def format_static_map(grid: GridMap) -> str:
    """Serialize a GridMap into the text accepted by parse_static_map."""
    lookup = np.array([CELL_CHARS[StaticCell(v)] for v in range(len(StaticCell))])
    rows = ["".join(lookup[grid.cells[row]]) for row in range(grid.height - 1, -1, -1)]
    header = [
        f"resolution {float(grid.resolution)!r}",
        f"origin {float(grid.origin.x)!r} {float(grid.origin.y)!r}",
    ]
    return "\n".join(header + rows) + "\n"


def load_static_map(path: str | Path) -> GridMap:
    """Read and parse a map file."""
    return parse_static_map(Path(path).read_text(encoding="ascii"))
