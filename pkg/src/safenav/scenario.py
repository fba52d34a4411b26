"""Closed-loop simulation of the monitored NMPC in a garage scenario.

Each tick runs, in order: field of view, drivable map, advisor boundaries,
references and constraints, NMPC, observer verdict and command, plant step,
pedestrian motion. The run ends at the goal or at the tick limit.

Scenario files are YAML; see ``ScenarioConfig.from_dict`` for the keys.
"""

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .advisor import AdvisorRequest, BoundarySet, advise, default_request
from .constraints import Advisor, BoxLimits, StageConstraints
from .errors import ScenarioConfigError
from .fov import FovMap, compute_fov
from .grid_map import (
    GridMap,
    WorldPoint,
    is_blocking,
    load_static_map,
    world_to_cell,
)
from .nmpc import NmpcController, SolveInfo, SqpSettings, Trajectory, Weights
from .observer import CommandSource, ObserverMode, SafetyObserver, Verdict
from .reachability import (
    DrivableMap,
    ExtrapolationRequest,
    PedestrianTrack,
    build_drivable_map,
)
from .reference import ReferencePath, horizon_reference, load_path, nearest_index
from .severity import SeverityClass, classify_severity, overlap_fraction
from .utils import get_logger
from .vehicle import ControlInput, VehicleParams, VehicleState, step

logger = get_logger(__name__)

DEFAULT_STAGES = 15
GOAL_SPEED = 0.05
TICK_COLUMNS = [
    "tick", "x", "y", "psi", "v", "delta", "a", "verdict", "overlap", "status"
]


@dataclass(frozen=True)
class ScriptLeg:
    """Constant pedestrian velocity (m/s) until ``until`` seconds (None: forever)."""

    until: float | None
    vx: float
    vy: float


@dataclass(frozen=True)
class PedestrianSpec:
    """Scripted pedestrian.

    Attributes:
        x, y: Start position (m).
        tracked: Whether the perception reports its speed when it is seen.
        footprint: Side of the square placed around a detection (m).
        script: Piecewise-constant velocity legs; standing still after the
            last leg ends.
    """

    x: float
    y: float
    tracked: bool = False
    footprint: float = 1.0
    script: tuple[ScriptLeg, ...] = ()

    def velocity_at(self, t: float) -> tuple[float, float]:
        for leg in self.script:
            if leg.until is None or t < leg.until:
                return leg.vx, leg.vy
        return 0.0, 0.0


def _required(data: dict, key: str) -> object:
    if key not in data or data[key] is None:
        raise ScenarioConfigError(f"{key} is required in the scenario")
    return data[key]


def _section(data: dict, key: str, cls: type, **overrides: object) -> object:
    values = data.get(key) or {}
    if not isinstance(values, dict):
        raise ScenarioConfigError(f"{key} must be a mapping, got {values!r}")
    try:
        return cls(**{**values, **overrides})
    except TypeError as err:
        raise ScenarioConfigError(f"invalid key in {key}: {err}") from err
    except ValueError as err:
        raise ScenarioConfigError(f"invalid {key}: {err}") from err


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a closed-loop run needs.

    Attributes:
        map_path: Static map file.
        path_path: Waypoint path file.
        start: Initial vehicle state.
        horizon: Prediction time T (s), N = round(T / T_s); None means N = 15.
        max_pedestrian_speed: Assumed pedestrian speed bound v̄_ped (m/s).
        buffer: Distance kept from potential pedestrian cells (m).
        observer_mode: "cog" or "footprint".
        tick_limit: Maximum number of ticks.
        goal_tolerance: Goal distance (m); None means the path spacing Δp.
        max_lateral_acceleration: ā_lat for the reference speed (m/s²).
        braking_deceleration: Deceleration of the reference speed ramp towards
            the goal (m/s²); None turns the ramp off.
        constraint_margin: Lateral clearance subtracted from measured distances (m).
        solver: QP backend name.
        vehicle: Vehicle parameters.
        limits: Box limits.
        weights: Tracking weights.
        sqp: SQP settings.
        pedestrians: Scripted pedestrians.
        name: Label used in logs and reports.
    """

    map_path: Path
    path_path: Path
    start: VehicleState
    horizon: float | None = None
    max_pedestrian_speed: float = 1.0
    buffer: float = 0.0
    observer_mode: ObserverMode = ObserverMode.COG
    tick_limit: int = 600
    goal_tolerance: float | None = None
    max_lateral_acceleration: float = 1.3
    braking_deceleration: float | None = 1.0
    constraint_margin: float = 0.0
    solver: str = "admm"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    limits: BoxLimits = field(default_factory=BoxLimits)
    weights: Weights = field(default_factory=Weights)
    sqp: SqpSettings = field(default_factory=SqpSettings)
    pedestrians: tuple[PedestrianSpec, ...] = ()
    name: str = "scenario"

    def __post_init__(self) -> None:
        if self.horizon is not None:
            if not self.horizon > 0:
                raise ScenarioConfigError(
                    f"horizon must be positive, got {self.horizon}"
                )
            ratio = self.horizon / self.vehicle.sample_time
            if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ScenarioConfigError(
                    f"horizon {self.horizon} is not a multiple of the sample time "
                    f"{self.vehicle.sample_time}"
                )
        if self.max_pedestrian_speed < 0:
            raise ScenarioConfigError(
                "max_pedestrian_speed must be non-negative, got "
                f"{self.max_pedestrian_speed}"
            )
        if self.buffer < 0 or self.constraint_margin < 0:
            raise ScenarioConfigError(
                "buffer and constraint_margin must be non-negative"
            )
        if self.tick_limit < 0:
            raise ScenarioConfigError(
                f"tick_limit must be non-negative, got {self.tick_limit}"
            )
        if self.goal_tolerance is not None and not self.goal_tolerance > 0:
            raise ScenarioConfigError(
                f"goal_tolerance must be positive, got {self.goal_tolerance}"
            )
        if not self.max_lateral_acceleration > 0:
            raise ScenarioConfigError("max_lateral_acceleration must be positive")
        braking = self.braking_deceleration
        if braking is not None and not braking > 0:
            raise ScenarioConfigError(
                f"braking_deceleration must be positive, got {braking}"
            )
        object.__setattr__(self, "observer_mode", ObserverMode(self.observer_mode))

    @property
    def n_stages(self) -> int:
        if self.horizon is None:
            return DEFAULT_STAGES
        return round(self.horizon / self.vehicle.sample_time)

    @property
    def horizon_time(self) -> float:
        """T = N · T_s (s)."""
        return self.n_stages * self.vehicle.sample_time

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "ScenarioConfig":
        """Build a config from a parsed scenario document.

        Relative file paths are resolved against ``base_dir``.

        Raises:
            ScenarioConfigError: If a required key is missing, a key is unknown,
                a value is invalid or a referenced file does not exist.
        """
        if not isinstance(data, dict):
            raise ScenarioConfigError("scenario must be a mapping")
        known = {
            "name", "map", "path", "start", "horizon", "max_pedestrian_speed",
            "buffer", "observer_mode", "tick_limit", "goal_tolerance",
            "max_lateral_acceleration", "braking_deceleration", "constraint_margin",
            "solver", "vehicle", "limits", "weights", "sqp", "pedestrians",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioConfigError(f"unknown scenario keys: {', '.join(unknown)}")

        base_dir = Path(base_dir)
        files = {}
        for key in ("map", "path"):
            file = base_dir / str(_required(data, key))
            if not file.is_file():
                raise ScenarioConfigError(f"{key} file {file} does not exist")
            files[key] = file.resolve()

        start = _required(data, "start")
        try:
            start_state = VehicleState(
                float(start["x"]), float(start["y"]),
                float(start.get("psi", 0.0)), float(start.get("v", 0.0)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as err:
            raise ScenarioConfigError(f"start needs numeric x and y: {err}") from err

        weights_data = data.get("weights") or {}
        try:
            weights = (
                Weights.from_diagonals(weights_data["Q"], weights_data["R"])
                if weights_data
                else Weights()
            )
        except (KeyError, ValueError) as err:
            raise ScenarioConfigError(f"weights need Q and R diagonals: {err}") from err

        try:
            pedestrians = tuple(
                PedestrianSpec(
                    x=float(p["x"]),
                    y=float(p["y"]),
                    tracked=bool(p.get("tracked", False)),
                    footprint=float(p.get("footprint", 1.0)),
                    script=tuple(
                        ScriptLeg(
                            None if leg.get("until") is None else float(leg["until"]),
                            float(leg.get("vx", 0.0)),
                            float(leg.get("vy", 0.0)),
                        )
                        for leg in p.get("script") or ()
                    ),
                )
                for p in data.get("pedestrians") or ()
            )
        except (KeyError, TypeError, ValueError, AttributeError) as err:
            raise ScenarioConfigError(f"invalid pedestrian entry: {err}") from err

        scalars = {
            key: data[key]
            for key in (
                "horizon", "max_pedestrian_speed", "buffer", "observer_mode",
                "tick_limit", "goal_tolerance", "max_lateral_acceleration",
                "constraint_margin", "solver", "name",
            )
            if data.get(key) is not None
        }
        # an explicit null turns the reference ramp off
        if "braking_deceleration" in data:
            scalars["braking_deceleration"] = data["braking_deceleration"]
        try:
            return cls(
                map_path=files["map"],
                path_path=files["path"],
                start=start_state,
                vehicle=_section(data, "vehicle", VehicleParams),
                limits=_section(data, "limits", BoxLimits),
                weights=weights,
                sqp=_section(data, "sqp", SqpSettings),
                pedestrians=pedestrians,
                **scalars,
            )
        except ValueError as err:
            if isinstance(err, ScenarioConfigError):
                raise
            raise ScenarioConfigError(str(err)) from err

    def to_dict(self) -> dict:
        """Plain-data form that from_dict accepts again."""
        return {
            "name": self.name,
            "map": str(self.map_path),
            "path": str(self.path_path),
            "start": asdict(self.start),
            "horizon": self.horizon,
            "max_pedestrian_speed": self.max_pedestrian_speed,
            "buffer": self.buffer,
            "observer_mode": str(self.observer_mode),
            "tick_limit": self.tick_limit,
            "goal_tolerance": self.goal_tolerance,
            "max_lateral_acceleration": self.max_lateral_acceleration,
            "braking_deceleration": self.braking_deceleration,
            "constraint_margin": self.constraint_margin,
            "solver": self.solver,
            "vehicle": asdict(self.vehicle),
            "limits": asdict(self.limits),
            "weights": {
                "Q": np.diag(self.weights.Q).tolist(),
                "R": np.diag(self.weights.R).tolist(),
            },
            "sqp": asdict(self.sqp),
            "pedestrians": [
                {
                    "x": p.x,
                    "y": p.y,
                    "tracked": p.tracked,
                    "footprint": p.footprint,
                    "script": [asdict(leg) for leg in p.script],
                }
                for p in self.pedestrians
            ],
        }


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read a YAML scenario file.

    Raises:
        ScenarioConfigError: If the file is not valid YAML or not a valid
            scenario.
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ScenarioConfigError(f"{path}: {err}") from err
    config = ScenarioConfig.from_dict(data, base_dir=path.parent)
    if "name" not in data:
        config = replace(config, name=path.stem)
    return config


class PedestrianAgent:
    """A scripted pedestrian moving through the simulated garage."""

    def __init__(self, spec: PedestrianSpec) -> None:
        self.spec = spec
        self.position = WorldPoint(spec.x, spec.y)

    def speed_at(self, t: float) -> float:
        return math.hypot(*self.spec.velocity_at(t))

    def track(self, fov: FovMap, grid: GridMap, t: float) -> PedestrianTrack | None:
        """Detection of this pedestrian, or None when it is not in view."""
        if not grid.contains(self.position):
            return None
        if not fov.is_visible(world_to_cell(grid, self.position)):
            return None
        speed = self.speed_at(t) if self.spec.tracked else None
        return PedestrianTrack(self.position, self.spec.footprint, speed)

    def move(self, grid: GridMap, t: float, dt: float) -> None:
        """Advance by one step unless that would leave the map or enter a wall."""
        vx, vy = self.spec.velocity_at(t)
        target = WorldPoint(self.position.x + vx * dt, self.position.y + vy * dt)
        if not grid.contains(target) or is_blocking(
            grid.cell(world_to_cell(grid, target))
        ):
            return
        self.position = target


@dataclass(frozen=True)
class TickRecord:
    """Everything that happened in one tick."""

    tick: int
    state: VehicleState
    command: ControlInput
    verdict: str
    offending_stage: int | None
    source: CommandSource
    free_distances: tuple[float, ...]
    overlap: float
    info: SolveInfo
    candidate: Trajectory | None
    constraints: tuple[StageConstraints | None, ...]
    tracks: tuple[PedestrianTrack, ...]

    def to_row(self) -> dict:
        return {
            "tick": self.tick,
            "x": self.state.x,
            "y": self.state.y,
            "psi": self.state.psi,
            "v": self.state.v,
            "delta": self.command.delta,
            "a": self.command.a,
            "verdict": self.verdict,
            "overlap": self.overlap,
            "status": str(self.info.status),
        }

    def to_log(self) -> dict:
        return {
            "type": "tick",
            "tick": self.tick,
            "state": asdict(self.state),
            "command": asdict(self.command),
            "verdict": self.verdict,
            "offending_stage": self.offending_stage,
            "source": str(self.source),
            "free_distances": list(self.free_distances),
            "overlap": self.overlap,
            "solver": self.info.to_dict(),
            "candidate": None if self.candidate is None else self.candidate.to_dict(),
            "constraints": [
                None if c is None else c.to_dict() for c in self.constraints
            ],
            "tracks": [
                {
                    "x": t.position.x,
                    "y": t.position.y,
                    "footprint": t.footprint,
                    "observed_speed": t.observed_speed,
                }
                for t in self.tracks
            ],
        }


@dataclass(frozen=True)
class RunReport:
    """Summary of one closed-loop run."""

    name: str
    ticks: int
    goal_reached: bool
    max_overlap: float
    severity: SeverityClass
    accepted: int
    rejected: int
    absent: int
    final_state: VehicleState

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ticks": self.ticks,
            "goal_reached": self.goal_reached,
            "max_overlap": self.max_overlap,
            "severity": self.severity.label,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "absent": self.absent,
            "final_state": asdict(self.final_state),
        }


@dataclass(frozen=True)
class RunResult:
    config: ScenarioConfig
    report: RunReport
    records: tuple[TickRecord, ...]
    initial_plan: Trajectory
    initial_verdict: Verdict | None = None

    def tick_table(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.records], columns=TICK_COLUMNS)


def plant_step(
    state: VehicleState, command: ControlInput, params: VehicleParams
) -> VehicleState:
    """Simulated vehicle: the bicycle model, never rolling backwards."""
    nxt = step(state, command, params)
    return VehicleState(nxt.x, nxt.y, nxt.psi, max(nxt.v, 0.0))


def goal_reached(state: VehicleState, path: ReferencePath, tolerance: float) -> bool:
    goal = path.goal
    distance = math.hypot(state.x - goal.x, state.y - goal.y)
    return distance < tolerance and state.v < GOAL_SPEED


def _detect(
    agents: Sequence[PedestrianAgent], fov: FovMap, grid: GridMap, t: float
) -> tuple[PedestrianTrack, ...]:
    tracks = (agent.track(fov, grid, t) for agent in agents)
    return tuple(track for track in tracks if track is not None)


def _advisor(dmap: DrivableMap) -> Advisor:
    def query(pose: VehicleState, request: AdvisorRequest) -> BoundarySet:
        return advise(dmap, pose, request)

    return query


def run_scenario(config: ScenarioConfig) -> RunResult:
    """Run the closed loop until the goal or the tick limit.

    Raises:
        ScenarioConfigError: If the map or path file cannot be read.
    """
    try:
        grid = load_static_map(config.map_path)
        path = load_path(config.path_path)
    except (OSError, ValueError) as err:
        raise ScenarioConfigError(f"cannot load scenario inputs: {err}") from err

    params = config.vehicle
    n_stages = config.n_stages
    horizon = config.horizon_time
    tolerance = config.goal_tolerance or path.spacing
    controller = NmpcController(
        params,
        limits=config.limits,
        weights=config.weights,
        settings=config.sqp,
        solver=config.solver,
        buffer=config.buffer,
        margin=config.constraint_margin,
    )
    observer = SafetyObserver(
        grid, params, horizon, config.max_pedestrian_speed, config.observer_mode
    )
    agents = [PedestrianAgent(spec) for spec in config.pedestrians]

    state = config.start
    tracks = _detect(agents, compute_fov(grid, state, params), grid, 0.0)
    initial_plan = observer.initialize(state, config.limits, n_stages, tracks)
    logger.info(
        "Running %s: N=%d (T=%.2f s), v_ped=%.2f m/s, %d pedestrians",
        config.name,
        n_stages,
        horizon,
        config.max_pedestrian_speed,
        len(agents),
    )

    records: list[TickRecord] = []
    reached = False
    for tick in range(config.tick_limit):
        if goal_reached(state, path, tolerance):
            reached = True
            break
        t = tick * params.sample_time
        fov = compute_fov(grid, state, params)
        tracks = _detect(agents, fov, grid, t)

        # monitor side: drivable map and the boundary service
        req = ExtrapolationRequest(horizon, config.max_pedestrian_speed, state.v)
        monitor_map = build_drivable_map(grid, state, params, req, tracks)
        start = nearest_index(path, state)
        refs = horizon_reference(
            path,
            start,
            params.sample_time,
            n_stages,
            config.max_lateral_acceleration,
            config.limits.v_max,
            config.braking_deceleration,
        )
        free = advise(
            monitor_map, state, default_request(config.buffer, refs[0].h, state.psi)
        ).distances()

        result = controller.plan(
            state, observer.store.remaining(), refs, _advisor(monitor_map)
        )
        decision = observer.step(state, result.trajectory, tracks)
        overlap = overlap_fraction(state, params, decision.dmap)
        verdict = "absent" if decision.verdict is None else str(decision.verdict)
        if decision.verdict is not None and not decision.verdict.accepted:
            logger.warning(
                "Tick %d: candidate rejected at stage %d", tick, decision.verdict.stage
            )

        records.append(
            TickRecord(
                tick=tick,
                state=state,
                command=decision.command,
                verdict=verdict,
                offending_stage=(
                    None if decision.verdict is None else decision.verdict.stage
                ),
                source=decision.source,
                free_distances=tuple(float(d) for d in free),
                overlap=overlap,
                info=result.info,
                candidate=result.trajectory,
                constraints=tuple(result.constraints),
                tracks=tracks,
            )
        )

        state = plant_step(state, decision.command, params)
        for agent in agents:
            agent.move(grid, t, params.sample_time)
    else:
        reached = goal_reached(state, path, tolerance)

    max_overlap = max((r.overlap for r in records), default=0.0)
    report = RunReport(
        name=config.name,
        ticks=len(records),
        goal_reached=reached,
        max_overlap=max_overlap,
        severity=classify_severity(max_overlap),
        accepted=sum(r.verdict == "accepted" for r in records),
        rejected=sum(r.verdict == "rejected" for r in records),
        absent=sum(r.verdict == "absent" for r in records),
        final_state=state,
    )
    logger.info(
        "Finished %s after %d ticks: goal %s, max overlap %.3f (%s)",
        config.name,
        report.ticks,
        "reached" if reached else "not reached",
        max_overlap,
        report.severity.label,
    )
    return RunResult(
        config, report, tuple(records), initial_plan, observer.initial_verdict
    )


def write_run_outputs(result: RunResult, out_dir: str | Path) -> Path:
    """Write ticks.csv, run.jsonl and report.yaml into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.tick_table().to_csv(out_dir / "ticks.csv", index=False)

    header = {
        "type": "header",
        "config": result.config.to_dict(),
        "n_stages": result.config.n_stages,
        "initial_plan": result.initial_plan.to_dict(),
        "initial_verdict": (
            None if result.initial_verdict is None else str(result.initial_verdict)
        ),
    }
    with open(out_dir / "run.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for record in result.records:
            f.write(json.dumps(record.to_log()) + "\n")

    with open(out_dir / "report.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(result.report.to_dict(), f, sort_keys=False)
    return out_dir
