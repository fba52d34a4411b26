"""Conservative extrapolation of where pedestrians could be.

Seeds are every occluded free cell, every entrance and the footprint of every
detected pedestrian. A cellular automaton then spreads each seed to its eight
neighbours once per generation, never into blocking cells. A seed moving at
speed v for a horizon T gets ``g = ceil(v·T / resolution)`` generations, so the
Chebyshev ball it covers contains every continuous path of length v·T.
"""

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .fov import FovMap, compute_fov
from .grid_map import GridIndex, GridMap, StaticCell, WorldPoint
from .utils import get_logger
from .vehicle import VehicleParams, VehicleState

logger = get_logger(__name__)

MOORE_NEIGHBOURHOOD = np.ones((3, 3), dtype=bool)

# Absorbs float noise such as 1.5 / 0.5 * 1.0000000000000002 before ceil().
_GENERATION_EPS = 1e-9


class CellClass(IntEnum):
    SAFE_DRIVABLE = 0
    POTENTIAL_PEDESTRIAN = 1
    STATIC_BLOCKED = 2


CLASS_CHARS = {
    CellClass.SAFE_DRIVABLE: ".",
    CellClass.POTENTIAL_PEDESTRIAN: "P",
    CellClass.STATIC_BLOCKED: "#",
}


@dataclass(frozen=True)
class PedestrianTrack:
    """A detected pedestrian.

    Attributes:
        position: Measured position (m).
        footprint: Side of the axis-aligned square placed around the position
            to cover localization error (m).
        observed_speed: Tracked speed (m/s), or None when only the position is
            known.
    """

    position: WorldPoint
    footprint: float = 1.0
    observed_speed: float | None = None

    def __post_init__(self) -> None:
        if not self.footprint > 0:
            raise ValueError(f"footprint must be positive, got {self.footprint}")
        if self.observed_speed is not None and not self.observed_speed >= 0:
            raise ValueError(
                f"observed_speed must be non-negative, got {self.observed_speed}"
            )


@dataclass(frozen=True)
class ExtrapolationRequest:
    """Extrapolation horizon and speed bounds.

    Attributes:
        horizon: Time span T to extrapolate over (s).
        max_pedestrian_speed: Maximum expected pedestrian speed v̄_ped (m/s).
        vehicle_speed: Current vehicle speed v₀ (m/s).
    """

    horizon: float
    max_pedestrian_speed: float
    vehicle_speed: float

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.max_pedestrian_speed >= 0:
            raise ValueError(
                "max_pedestrian_speed must be non-negative, "
                f"got {self.max_pedestrian_speed}"
            )
        if not self.vehicle_speed >= 0:
            raise ValueError(
                f"vehicle_speed must be non-negative, got {self.vehicle_speed}"
            )


@dataclass(frozen=True, eq=False)
class DrivableMap:
    """Per-cell dynamic classification on top of a static grid.

    Attributes:
        grid: The static map the classification refers to.
        classes: Array of shape (height, width) holding CellClass values.
    """

    grid: GridMap
    classes: np.ndarray

    def __post_init__(self) -> None:
        classes = np.array(self.classes, dtype=np.int8)
        if classes.shape != self.grid.shape:
            raise ValueError(
                f"classes has shape {classes.shape}, expected {self.grid.shape}"
            )
        classes.setflags(write=False)
        object.__setattr__(self, "classes", classes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DrivableMap):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.classes, other.classes)

    @property
    def potential_pedestrian(self) -> np.ndarray:
        return self.classes == CellClass.POTENTIAL_PEDESTRIAN

    @property
    def safe(self) -> np.ndarray:
        return self.classes == CellClass.SAFE_DRIVABLE

    def cell_class(self, i: GridIndex | tuple[int, int]) -> CellClass:
        return CellClass(int(self.classes[i[1], i[0]]))


def effective_speed(
    req: ExtrapolationRequest, track: PedestrianTrack | None = None
) -> float:
    """Speed a seed spreads with.

    Untracked pedestrians are capped by min(v̄_ped, v₀); a pedestrian tracked
    with a measured speed keeps that speed, even above the cap.
    """
    if track is not None and track.observed_speed is not None:
        return track.observed_speed
    return min(req.max_pedestrian_speed, req.vehicle_speed)


def footprint_cells(grid: GridMap, track: PedestrianTrack) -> np.ndarray:
    """Boolean mask of cells whose centers lie in the track's square.

    The square is half-open, [p - s/2, p + s/2), so a 1 m square centred on a
    cell center covers a 2x2 block on a 0.5 m grid. The cell holding the
    position itself is always included.
    """
    mask = np.zeros(grid.shape, dtype=bool)
    half = track.footprint / 2
    res = grid.resolution
    x, y = track.position
    lo_col = math.ceil((x - half - grid.origin.x) / res - 0.5)
    hi_col = math.ceil((x + half - grid.origin.x) / res - 0.5)
    lo_row = math.ceil((y - half - grid.origin.y) / res - 0.5)
    hi_row = math.ceil((y + half - grid.origin.y) / res - 0.5)
    lo_col, hi_col = max(lo_col, 0), min(hi_col, grid.width)
    lo_row, hi_row = max(lo_row, 0), min(hi_row, grid.height)
    if lo_col < hi_col and lo_row < hi_row:
        mask[lo_row:hi_row, lo_col:hi_col] = True
    if grid.contains(track.position):
        col = math.floor((x - grid.origin.x) / res)
        row = math.floor((y - grid.origin.y) / res)
        mask[min(row, grid.height - 1), min(col, grid.width - 1)] = True
    return mask


def seed_dynamic_map(
    grid: GridMap, fov: FovMap, tracks: list[PedestrianTrack] | tuple = ()
) -> DrivableMap:
    """Mark every place a pedestrian could be right now.

    Raises:
        ValueError: If the FoV map and the grid differ in size.
    """
    if fov.visible.shape != grid.shape:
        raise ValueError(
            f"FoV map shape {fov.visible.shape} does not match grid {grid.shape}"
        )
    blocked = grid.blocking_mask()
    seeds = fov.occluded | (grid.cells == StaticCell.ENTRANCE)
    for track in tracks:
        seeds |= footprint_cells(grid, track)

    classes = np.full(grid.shape, CellClass.SAFE_DRIVABLE, dtype=np.int8)
    classes[seeds] = CellClass.POTENTIAL_PEDESTRIAN
    classes[blocked] = CellClass.STATIC_BLOCKED
    return DrivableMap(grid=grid, classes=classes)


def seed_speeds(
    seeded: DrivableMap,
    req: ExtrapolationRequest,
    tracks: list[PedestrianTrack] | tuple = (),
    fov: FovMap | None = None,
) -> np.ndarray:
    """Per-cell spreading speed of every seed (NaN on non-seed cells).

    Occluded and entrance seeds spread with effective_speed(req). Cells under
    a pedestrian tracked with an observed speed spread with that speed; where
    such a cell is also an occluded or entrance seed, the larger speed wins.

    Args:
        seeded: Output of seed_dynamic_map.
        req: Extrapolation horizon and speed bounds.
        tracks: Detected pedestrians.
        fov: Field of view the seeds came from. Without it, every seed outside
            the tracked footprints counts as occluded.
    """
    grid = seeded.grid
    seeds = seeded.potential_pedestrian
    speeds = np.full(grid.shape, np.nan)

    tracked = [t for t in tracks if t.observed_speed is not None]
    background = seeds.copy()
    for track in tracked:
        background &= ~footprint_cells(grid, track)
    background |= seeds & (grid.cells == StaticCell.ENTRANCE)
    if fov is not None:
        background |= seeds & fov.occluded
    speeds[background] = effective_speed(req)

    for track in tracked:
        cells = footprint_cells(grid, track) & seeds
        speeds[cells] = np.fmax(speeds[cells], effective_speed(req, track))
    return speeds


def generations(speed: float, horizon: float, resolution: float) -> int:
    """Number of automaton generations g = ceil(v·T / resolution)."""
    return max(0, math.ceil(speed * horizon / resolution - _GENERATION_EPS))


def extrapolate(
    seeded: DrivableMap, req: ExtrapolationRequest, speeds: np.ndarray
) -> DrivableMap:
    """Spread every seed over the cells it can reach within the horizon.

    Seeds are grouped by speed; each group is dilated with its own generation
    count and the results are united.

    Args:
        seeded: Output of seed_dynamic_map.
        req: Extrapolation horizon.
        speeds: Per-cell seed speeds (see seed_speeds); ignored off-seed.
    """
    seeds = seeded.potential_pedestrian
    passable = seeded.classes != CellClass.STATIC_BLOCKED
    reached = seeds.copy()

    seed_values = speeds[seeds]
    if np.isnan(seed_values).any():
        raise ValueError("every seed cell needs a speed")
    for speed in np.unique(seed_values):
        g = generations(float(speed), req.horizon, seeded.grid.resolution)
        if g == 0:
            continue
        group = seeds & (speeds == speed)
        # iterations=0 would mean "until convergence" to scipy
        reached |= ndimage.binary_dilation(
            group, structure=MOORE_NEIGHBOURHOOD, iterations=g, mask=passable
        )

    classes = np.array(seeded.classes)
    classes[reached & passable] = CellClass.POTENTIAL_PEDESTRIAN
    return DrivableMap(grid=seeded.grid, classes=classes)


def build_drivable_map(
    grid: GridMap,
    state: VehicleState,
    params: VehicleParams,
    req: ExtrapolationRequest,
    tracks: list[PedestrianTrack] | tuple = (),
) -> DrivableMap:
    """FoV, seeding and extrapolation in one call."""
    fov = compute_fov(grid, state, params)
    seeded = seed_dynamic_map(grid, fov, tracks)
    dmap = extrapolate(seeded, req, seed_speeds(seeded, req, tracks, fov))
    logger.debug(
        "Drivable map: %d potential pedestrian cells (v_eff=%.2f m/s, T=%.2f s)",
        int(dmap.potential_pedestrian.sum()),
        effective_speed(req),
        req.horizon,
    )
    return dmap


def format_drivable_map(dmap: DrivableMap) -> str:
    """ASCII rendering, northmost row first: ``.`` safe, ``P`` pedestrian, ``#``."""
    lookup = np.array([CLASS_CHARS[CellClass(v)] for v in range(len(CellClass))])
    return "\n".join("".join(lookup[row]) for row in dmap.classes[::-1]) + "\n"
