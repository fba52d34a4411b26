"""Post-hoc rating of a run by vehicle footprint overlap with pedestrian cells."""

from enum import IntEnum

import numpy as np

from .reachability import CellClass, DrivableMap
from .vehicle import VehicleParams, VehicleState, footprint_samples

MINOR_CONFLICT_LIMIT = 0.10
CRITICAL_LIMIT = 0.50

# samples per cell side; 4 gives 16 samples per cell
SAMPLES_PER_CELL_SIDE = 4


class SeverityClass(IntEnum):
    SAFE = 0
    MINOR_CONFLICT = 1
    CRITICAL = 2
    HAZARDOUS = 3

    @property
    def label(self) -> str:
        return self.name.lower()


def overlap_fraction(
    state: VehicleState, params: VehicleParams, dmap: DrivableMap
) -> float:
    """Share of the body rectangle over potential pedestrian cells.

    The rectangle is sampled on a regular grid at a quarter of the map
    resolution. Samples outside the map count as conflicting.
    """
    grid = dmap.grid
    points = footprint_samples(state, params, grid.resolution / SAMPLES_PER_CELL_SIDE)
    x_min, y_min, x_max, y_max = grid.extent
    inside = (
        (points[:, 0] >= x_min)
        & (points[:, 0] < x_max)
        & (points[:, 1] >= y_min)
        & (points[:, 1] < y_max)
    )
    conflict = ~inside
    cols = np.floor((points[inside, 0] - grid.origin.x) / grid.resolution).astype(int)
    rows = np.floor((points[inside, 1] - grid.origin.y) / grid.resolution).astype(int)
    cols = np.clip(cols, 0, grid.width - 1)
    rows = np.clip(rows, 0, grid.height - 1)
    conflict[inside] = dmap.classes[rows, cols] == CellClass.POTENTIAL_PEDESTRIAN
    return float(conflict.mean())


def classify_severity(fraction: float) -> SeverityClass:
    """Map a maximum overlap fraction onto the severity scale.

    Raises:
        ValueError: If the fraction lies outside [0, 1].
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"overlap fraction must lie in [0, 1], got {fraction}")
    if fraction == 0.0:
        return SeverityClass.SAFE
    if fraction <= MINOR_CONFLICT_LIMIT:
        return SeverityClass.MINOR_CONFLICT
    if fraction <= CRITICAL_LIMIT:
        return SeverityClass.CRITICAL
    return SeverityClass.HAZARDOUS
