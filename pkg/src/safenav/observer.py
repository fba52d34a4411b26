"""Safety observer: collision check of candidates and the fallback trajectory.

The observer never sees the controller's constraints. It rebuilds the drivable
map from the same sensor inputs, superimposes each candidate on it and only
lets accepted plans reach the actuators. When a candidate is rejected or
missing, it keeps executing the latest accepted plan, which always ends at
rest.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from .constraints import BoxLimits
from .grid_map import GridMap
from .nmpc import Trajectory, cold_start_trajectory, shift_trajectory
from .reachability import (
    CellClass,
    DrivableMap,
    ExtrapolationRequest,
    PedestrianTrack,
    build_drivable_map,
)
from .utils import get_logger
from .vehicle import FULL_STOP, ControlInput, VehicleParams, VehicleState

logger = get_logger(__name__)

# footprint rasterization density relative to the map resolution
FOOTPRINT_SAMPLES_PER_CELL_SIDE = 4


class ObserverMode(StrEnum):
    COG = "cog"
    FOOTPRINT = "footprint"


class CommandSource(StrEnum):
    CANDIDATE = "candidate"
    FALLBACK = "fallback"
    FULL_STOP = "full_stop"


@dataclass(frozen=True)
class Verdict:
    """Accepted when ``stage`` is None, otherwise rejected at that stage."""

    stage: int | None = None

    def __post_init__(self) -> None:
        if self.stage is not None and self.stage < 0:
            raise ValueError(f"stage must be non-negative, got {self.stage}")

    @property
    def accepted(self) -> bool:
        return self.stage is None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(None)

    @classmethod
    def reject(cls, stage: int) -> "Verdict":
        return cls(stage)

    def __str__(self) -> str:
        return "accepted" if self.accepted else "rejected"


ACCEPTED = Verdict.accept()


def _cell_indices(
    grid: GridMap, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Columns, rows and an inside mask for world points (n, 2)."""
    x_min, y_min, x_max, y_max = grid.extent
    inside = (
        (points[:, 0] >= x_min)
        & (points[:, 0] < x_max)
        & (points[:, 1] >= y_min)
        & (points[:, 1] < y_max)
    )
    cols = np.floor((points[:, 0] - grid.origin.x) / grid.resolution).astype(np.int64)
    rows = np.floor((points[:, 1] - grid.origin.y) / grid.resolution).astype(np.int64)
    cols = np.clip(cols, 0, grid.width - 1)
    rows = np.clip(rows, 0, grid.height - 1)
    return cols, rows, inside


def _footprint_raster(
    state: VehicleState, params: VehicleParams, resolution: float
) -> np.ndarray:
    """Points covering the body rectangle, edges included."""
    spacing = resolution / FOOTPRINT_SAMPLES_PER_CELL_SIDE
    s = np.linspace(
        -params.rear_extent,
        params.front_extent,
        math.ceil(params.length / spacing) + 1,
    )
    d = np.linspace(
        -params.width / 2, params.width / 2, math.ceil(params.width / spacing) + 1
    )
    ss, dd = np.meshgrid(s, d, indexing="ij")
    cos_p, sin_p = math.cos(state.psi), math.sin(state.psi)
    x = state.x + ss.ravel() * cos_p - dd.ravel() * sin_p
    y = state.y + ss.ravel() * sin_p + dd.ravel() * cos_p
    return np.column_stack([x, y])


def stage_conflicts(
    state: VehicleState, dmap: DrivableMap, mode: ObserverMode, params: VehicleParams
) -> bool:
    """Whether one stage touches a cell that is not safely drivable."""
    if mode == ObserverMode.COG:
        points = np.array([[state.x, state.y]])
    else:
        points = _footprint_raster(state, params, dmap.grid.resolution)
    cols, rows, inside = _cell_indices(dmap.grid, points)
    if not inside.all():
        return True
    return bool(np.any(dmap.classes[rows, cols] != CellClass.SAFE_DRIVABLE))


def check_trajectory(
    trajectory: Trajectory,
    dmap: DrivableMap,
    mode: ObserverMode | str = ObserverMode.COG,
    params: VehicleParams | None = None,
) -> Verdict:
    """Superimpose a trajectory on the drivable map.

    Returns:
        Rejected at the first stage whose CoG cell (COG mode) or body
        rectangle (FOOTPRINT mode) touches a potential pedestrian or blocked
        cell, or leaves the map; Accepted otherwise.
    """
    mode = ObserverMode(mode)
    params = params or VehicleParams()
    for k in range(len(trajectory.states)):
        if stage_conflicts(trajectory.state(k), dmap, mode, params):
            return Verdict.reject(k)
    return ACCEPTED


@dataclass
class FallbackStore:
    """Latest accepted trajectory and how many of its stages are consumed."""

    trajectory: Trajectory
    index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.index <= self.trajectory.horizon:
            raise ValueError(
                f"index must lie in [0, {self.trajectory.horizon}], got {self.index}"
            )

    def remaining(self) -> Trajectory:
        """The stored plan from the vehicle's current stage on."""
        return shift_trajectory(self.trajectory, self.index)


def fallback_command(
    store: FallbackStore, verdict: Verdict | None, candidate: Trajectory | None
) -> tuple[ControlInput, CommandSource]:
    """Command to actuate this tick; updates the store in place.

    An accepted candidate replaces the stored plan and its stage-0 inputs are
    returned. Otherwise the stored plan's inputs at the consumption index are
    returned and the index advances; its terminal stage holds the full stop.
    """
    if verdict is not None and verdict.accepted and candidate is not None:
        store.trajectory = candidate
        store.index = 1
        return candidate.first_input, CommandSource.CANDIDATE

    horizon = store.trajectory.horizon
    if store.index >= horizon:
        return FULL_STOP, CommandSource.FULL_STOP
    command = store.trajectory.control(store.index)
    store.index += 1
    return command, CommandSource.FALLBACK


@dataclass(frozen=True)
class ObserverDecision:
    """Verdict (None without a candidate), command and the map it was checked on."""

    verdict: Verdict | None
    command: ControlInput
    source: CommandSource
    dmap: DrivableMap


class SafetyObserver:
    """Owns the fallback store and produces the actuated command each tick."""

    def __init__(
        self,
        grid: GridMap,
        params: VehicleParams,
        horizon: float,
        max_pedestrian_speed: float,
        mode: ObserverMode | str = ObserverMode.COG,
    ) -> None:
        """Initialize the observer.

        Args:
            grid: Static map.
            params: Vehicle geometry.
            horizon: Extrapolation horizon T (s), the controller's N · T_s.
            max_pedestrian_speed: Assumed pedestrian speed bound (m/s).
            mode: COG or FOOTPRINT collision check.
        """
        self.grid = grid
        self.params = params
        self.horizon = horizon
        self.max_pedestrian_speed = max_pedestrian_speed
        self.mode = ObserverMode(mode)
        self.store: FallbackStore | None = None
        self.initial_verdict: Verdict | None = None

    def drivable_map(
        self, state: VehicleState, tracks: Sequence[PedestrianTrack] = ()
    ) -> DrivableMap:
        """The observer's own reconstruction of the drivable map."""
        req = ExtrapolationRequest(
            self.horizon, self.max_pedestrian_speed, max(state.v, 0.0)
        )
        return build_drivable_map(self.grid, state, self.params, req, tuple(tracks))

    def initialize(
        self,
        xi0: VehicleState,
        limits: BoxLimits,
        n_stages: int,
        tracks: Sequence[PedestrianTrack] = (),
    ) -> Trajectory:
        """Load the mission-start braking plan into the fallback store.

        The plan is stored even when it fails its own check; the outcome is
        kept in ``initial_verdict``.
        """
        plan = cold_start_trajectory(xi0, self.params, limits, n_stages)
        verdict = check_trajectory(
            plan, self.drivable_map(xi0, tracks), self.mode, self.params
        )
        if not verdict.accepted:
            logger.warning(
                "Initial braking plan conflicts with the drivable map at stage %d",
                verdict.stage,
            )
        self.initial_verdict = verdict
        self.store = FallbackStore(plan, 0)
        return plan

    def step(
        self,
        state: VehicleState,
        candidate: Trajectory | None,
        tracks: Sequence[PedestrianTrack] = (),
    ) -> ObserverDecision:
        """Check the candidate and pick the command for this tick."""
        if self.store is None:
            raise RuntimeError("observer is not initialized")
        dmap = self.drivable_map(state, tracks)
        verdict = None
        if candidate is not None:
            verdict = check_trajectory(candidate, dmap, self.mode, self.params)
            if not verdict.accepted:
                logger.debug("Candidate rejected at stage %d", verdict.stage)
        command, source = fallback_command(self.store, verdict, candidate)
        return ObserverDecision(verdict, command, source, dmap)
