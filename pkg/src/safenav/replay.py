"""Re-verification of a closed-loop run from its JSON-lines log.

Nothing here trusts the run: the drivable maps are rebuilt from the logged
vehicle states and pedestrian tracks, constraints are re-evaluated outside the
solver and the fallback store is walked again from the logged verdicts.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import StageConstraints, check_box, halfspace_violation
from .errors import ScenarioConfigError
from .grid_map import WorldPoint, load_static_map
from .nmpc import Trajectory
from .observer import (
    FallbackStore,
    ObserverMode,
    Verdict,
    check_trajectory,
    fallback_command,
)
from .reachability import ExtrapolationRequest, PedestrianTrack, build_drivable_map
from .scenario import ScenarioConfig
from .utils import get_logger
from .vehicle import ControlInput, VehicleState

logger = get_logger(__name__)

REPLAY_TOLERANCE = 1e-5


@dataclass
class ReplayReport:
    """Outcome of a replay.

    Attributes:
        ticks: Number of tick records checked.
        accepted: Number of accepted candidates checked.
        violations: One human-readable line per failed check.
    """

    ticks: int = 0
    accepted: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def fail(self, tick: int, message: str) -> None:
        self.violations.append(f"tick {tick}: {message}")


def read_log(path: str | Path) -> tuple[dict, list[dict]]:
    """Header and tick records of a run log.

    Raises:
        ValueError: If the log is empty or does not start with a header.
    """
    with open(path, encoding="utf-8") as f:
        entries = [json.loads(line) for line in f if line.strip()]
    if not entries or entries[0].get("type") != "header":
        raise ValueError(f"{path} does not start with a run header")
    return entries[0], [e for e in entries[1:] if e.get("type") == "tick"]


def _tracks(record: dict) -> tuple[PedestrianTrack, ...]:
    return tuple(
        PedestrianTrack(WorldPoint(t["x"], t["y"]), t["footprint"], t["observed_speed"])
        for t in record["tracks"]
    )


def _check_constraints(
    report: ReplayReport,
    tick: int,
    candidate: Trajectory,
    constraints: list[StageConstraints | None],
    config: ScenarioConfig,
) -> None:
    horizon = candidate.horizon
    v_terminal = candidate.states[-1, 3]
    if abs(v_terminal) > REPLAY_TOLERANCE or np.any(candidate.inputs[-1] != 0.0):
        report.fail(tick, f"terminal stage is not at rest (v_N = {v_terminal:.3g})")
    for k in range(horizon):
        if not check_box(
            candidate.stage(k), candidate.stage(k + 1), config.limits, REPLAY_TOLERANCE
        ):
            report.fail(tick, f"box limits violated between stages {k} and {k + 1}")
    for k, stage in enumerate(constraints):
        if stage is None:
            continue
        for halfspace in stage.halfspaces():
            violation = halfspace_violation(halfspace, candidate.states[k])
            if violation > REPLAY_TOLERANCE:
                report.fail(
                    tick, f"half-space violated by {violation:.3g} m at stage {k}"
                )


def _same_command(a: ControlInput, b: ControlInput) -> bool:
    return bool(np.allclose(a.as_array(), b.as_array(), rtol=0.0, atol=1e-12))


def replay_log(path: str | Path) -> ReplayReport:
    """Re-verify the observer invariants of a logged run.

    Checks that every accepted candidate avoids the re-derived drivable map,
    ends at rest and satisfies its box limits and half-spaces, and that every
    actuated command is the one the fallback logic yields from accepted
    trajectories and the initial braking plan.

    Raises:
        ValueError: If the log is malformed.
        ScenarioConfigError: If the logged configuration is invalid.
    """
    header, records = read_log(path)
    config = ScenarioConfig.from_dict(header["config"])
    try:
        grid = load_static_map(config.map_path)
    except OSError as err:
        raise ScenarioConfigError(f"cannot load map {config.map_path}: {err}") from err
    params = config.vehicle
    store = FallbackStore(Trajectory.from_dict(header["initial_plan"]), 0)

    report = ReplayReport()
    for record in records:
        tick = record["tick"]
        report.ticks += 1
        state = VehicleState(**record["state"])
        candidate = (
            None
            if record["candidate"] is None
            else Trajectory.from_dict(record["candidate"])
        )
        verdict_name = record["verdict"]

        if verdict_name == "accepted" and candidate is not None:
            report.accepted += 1
            req = ExtrapolationRequest(
                config.horizon_time, config.max_pedestrian_speed, max(state.v, 0.0)
            )
            dmap = build_drivable_map(grid, state, params, req, _tracks(record))
            verdict = check_trajectory(
                candidate, dmap, ObserverMode(config.observer_mode), params
            )
            if not verdict.accepted:
                report.fail(
                    tick, f"accepted candidate conflicts at stage {verdict.stage}"
                )
            constraints = [
                None if c is None else StageConstraints.from_dict(c)
                for c in record["constraints"]
            ]
            _check_constraints(report, tick, candidate, constraints, config)

        logged_verdict = None
        if verdict_name != "absent":
            stage = record["offending_stage"]
            logged_verdict = (
                Verdict.accept() if stage is None else Verdict.reject(stage)
            )
        expected, source = fallback_command(store, logged_verdict, candidate)
        actuated = ControlInput(**record["command"])
        if not _same_command(expected, actuated) or str(source) != record["source"]:
            report.fail(
                tick,
                f"actuated command {actuated} ({record['source']}) does not "
                f"trace to an accepted plan, expected {expected} ({source})",
            )

    logger.info(
        "Replayed %d ticks (%d accepted candidates): %d violations",
        report.ticks,
        report.accepted,
        len(report.violations),
    )
    return report
