"""Tests for observer module."""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from safenav.constraints import BoxLimits
from safenav.grid_map import GridMap, WorldPoint, load_static_map
from safenav.nmpc import Trajectory
from safenav.observer import (
    CommandSource,
    FallbackStore,
    ObserverMode,
    SafetyObserver,
    Verdict,
    check_trajectory,
    fallback_command,
)
from safenav.reachability import CellClass, DrivableMap, PedestrianTrack
from safenav.replay import replay_log
from safenav.scenario import (
    PedestrianSpec,
    ScriptLeg,
    load_scenario,
    run_scenario,
    write_run_outputs,
)
from safenav.vehicle import FULL_STOP, ControlInput, VehicleParams, VehicleState


def _straight(
    x0: float, y: float, n: int, step: float = 1.0, a: float = 1.0
) -> Trajectory:
    states = np.array([[x0 + step * k, y, 0.0, 1.0] for k in range(n + 1)])
    inputs = np.zeros((n + 1, 2))
    inputs[:-1, 1] = a
    return Trajectory(states, inputs)


@pytest.fixture
def corridor() -> DrivableMap:
    """20 m x 10 m, pedestrian column at x in [10, 10.5)."""
    grid = GridMap(40, 20, 0.5, WorldPoint(0.0, 0.0), np.zeros((20, 40)))
    classes = np.full((20, 40), CellClass.SAFE_DRIVABLE)
    classes[:, 20] = CellClass.POTENTIAL_PEDESTRIAN
    return DrivableMap(grid, classes)


class TestVerdict:
    def test_accept_and_reject(self) -> None:
        assert Verdict.accept().accepted
        assert str(Verdict.accept()) == "accepted"
        rejected = Verdict.reject(3)
        assert not rejected.accepted
        assert rejected.stage == 3
        assert str(rejected) == "rejected"

    def test_negative_stage(self) -> None:
        with pytest.raises(ValueError):
            Verdict.reject(-1)


class TestCheckTrajectory:
    """Test cases for superimposing candidates on the drivable map."""

    def test_clear_trajectory_is_accepted(self, corridor: DrivableMap) -> None:
        assert check_trajectory(_straight(2.0, 5.0, 4), corridor).accepted

    def test_cog_rejects_at_first_conflict(self, corridor: DrivableMap) -> None:
        """Stage 8 puts the CoG at x = 10, inside the pedestrian column."""
        verdict = check_trajectory(_straight(2.0, 5.0, 10), corridor, ObserverMode.COG)
        assert verdict == Verdict.reject(8)

    def test_footprint_rejects_earlier(self, corridor: DrivableMap) -> None:
        """The front bumper reaches the column two stages before the CoG."""
        verdict = check_trajectory(_straight(2.0, 5.0, 10), corridor, "footprint")
        assert verdict == Verdict.reject(6)

    def test_leaving_the_map_is_a_conflict(self, corridor: DrivableMap) -> None:
        traj = _straight(2.0, 5.0, 3, step=-1.5)
        assert check_trajectory(traj, corridor) == Verdict.reject(2)

    @pytest.mark.parametrize(
        "x,y,accepted",
        [
            (20.0, 5.0, False),
            (2.0, 10.0, False),
            (19.999, 9.999, True),
            (0.0, 0.0, True),
        ],
    )
    def test_map_bounds_are_half_open(
        self, corridor: DrivableMap, x: float, y: float, accepted: bool
    ) -> None:
        """The north and east edges lie outside the map, as in GridMap.contains."""
        states = np.array([[2.0, 5.0, 0.0, 0.0], [x, y, 0.0, 0.0]])
        traj = Trajectory(states, np.zeros((2, 2)))
        assert check_trajectory(traj, corridor).accepted is accepted
        assert corridor.grid.contains(WorldPoint(x, y)) is accepted

    def test_heading_rotates_the_footprint(self, corridor: DrivableMap) -> None:
        """Facing north at x = 8.5, the body stays clear of the column."""
        states = np.array([[8.5, 3.0, math.pi / 2, 0.0], [8.5, 4.0, math.pi / 2, 0.0]])
        traj = Trajectory(states, np.zeros((2, 2)))
        assert check_trajectory(traj, corridor, ObserverMode.FOOTPRINT).accepted


class TestFallbackCommand:
    """Test cases for the fallback sequence."""

    def test_fallback_then_full_stop(self) -> None:
        """Stored inputs are replayed in order and end in a full stop."""
        store = FallbackStore(_straight(0.0, 0.0, 3, a=-1.0))
        sources = []
        for verdict in (None, Verdict.reject(2), None, None, None):
            command, source = fallback_command(store, verdict, None)
            sources.append(source)
        assert sources == [CommandSource.FALLBACK] * 3 + [CommandSource.FULL_STOP] * 2
        assert command == FULL_STOP
        assert store.index == 3

    def test_accepted_candidate_replaces_store(self) -> None:
        store = FallbackStore(_straight(0.0, 0.0, 3, a=-1.0), index=2)
        candidate = _straight(0.0, 0.0, 3, a=0.5)
        command, source = fallback_command(store, Verdict.accept(), candidate)
        assert source == CommandSource.CANDIDATE
        assert command == ControlInput(0.0, 0.5)
        assert store.trajectory is candidate
        assert store.index == 1
        command, source = fallback_command(store, Verdict.reject(0), candidate)
        assert source == CommandSource.FALLBACK
        assert command == candidate.control(1)

    def test_remaining(self) -> None:
        store = FallbackStore(_straight(0.0, 0.0, 3), index=1)
        assert store.remaining().states[:, 0].tolist() == [1.0, 2.0, 3.0, 3.0]

    def test_invalid_index(self) -> None:
        with pytest.raises(ValueError):
            FallbackStore(_straight(0.0, 0.0, 3), index=4)


class TestSafetyObserver:
    """Test cases for the per-tick observer loop in an open 10 m x 10 m room."""

    @pytest.fixture
    def observer(self) -> SafetyObserver:
        grid = GridMap(20, 20, 0.5, WorldPoint(0.0, 0.0), np.zeros((20, 20)))
        return SafetyObserver(grid, VehicleParams(), 1.5, 1.0, ObserverMode.COG)

    def test_step_requires_initialization(self, observer: SafetyObserver) -> None:
        with pytest.raises(RuntimeError):
            observer.step(VehicleState(3.0, 3.0, 0.0, 0.0), None)

    def test_initialize_stores_braking_plan(self, observer: SafetyObserver) -> None:
        xi0 = VehicleState(3.0, 3.0, 0.0, 1.0)
        plan = observer.initialize(xi0, BoxLimits(), 15)
        assert plan.horizon == 15
        assert plan.states[-1, 3] == pytest.approx(0.0, abs=1e-12)
        assert observer.store.trajectory is plan
        assert observer.store.index == 0
        assert observer.initial_verdict == Verdict.accept()

    def test_initialize_records_a_conflicting_plan(
        self, observer: SafetyObserver
    ) -> None:
        """A braking plan through a pedestrian is stored but reported rejected."""
        xi0 = VehicleState(3.0, 3.0, 0.0, 1.0)
        track = PedestrianTrack(WorldPoint(3.75, 3.25), 1.0)
        plan = observer.initialize(xi0, BoxLimits(), 15, [track])
        assert not observer.initial_verdict.accepted
        assert observer.initial_verdict.stage is not None
        assert observer.store.trajectory is plan

    def test_tick_sequence(self, observer: SafetyObserver) -> None:
        """Accept, reject at the pedestrian, then run out the stored plan."""
        state = VehicleState(3.0, 3.0, 0.0, 0.0)
        track = PedestrianTrack(WorldPoint(7.25, 7.25), 1.0)
        observer.initialize(state, BoxLimits(), 4)

        clear = _straight(3.0, 3.0, 4, step=0.5)
        decision = observer.step(state, clear, [track])
        assert decision.verdict == Verdict.accept()
        assert decision.source == CommandSource.CANDIDATE
        assert decision.command == ControlInput(0.0, 1.0)
        assert decision.dmap.potential_pedestrian.sum() == 4

        states = np.array([[3.0 + k, 3.0 + k, math.pi / 4, 1.0] for k in range(5)])
        crossing = Trajectory(states, np.zeros((5, 2)))
        decision = observer.step(state, crossing, [track])
        assert decision.verdict == Verdict.reject(4)
        assert decision.source == CommandSource.FALLBACK
        assert decision.command == clear.control(1)

        sources = [observer.step(state, None, [track]).source for _ in range(3)]
        assert sources == [
            CommandSource.FALLBACK,
            CommandSource.FALLBACK,
            CommandSource.FULL_STOP,
        ]


@pytest.mark.slow
class TestClosedLoopSafety:
    """Random pedestrians in the open room, replayed against the observer."""

    @pytest.mark.parametrize("seed", range(4))
    def test_executed_plans_keep_the_cog_safe(
        self, room_scenario: Path, tmp_path: Path, seed: int
    ) -> None:
        rng = np.random.default_rng(seed)
        pedestrians = tuple(
            PedestrianSpec(
                x=float(rng.uniform(6.0, 18.0)),
                y=float(rng.uniform(1.0, 9.0)),
                tracked=bool(rng.random() < 0.5),
                script=(ScriptLeg(None, *(float(v) for v in rng.uniform(-1, 1, 2))),),
            )
            for _ in range(3)
        )
        config = replace(
            load_scenario(room_scenario),
            tick_limit=40,
            pedestrians=pedestrians,
            observer_mode=ObserverMode.COG,
        )
        result = run_scenario(config)
        monitor = SafetyObserver(
            load_static_map(config.map_path),
            config.vehicle,
            config.horizon_time,
            config.max_pedestrian_speed,
            ObserverMode.COG,
        )

        for record in result.records:
            if record.source != CommandSource.CANDIDATE:
                continue
            assert record.verdict == "accepted"
            dmap = monitor.drivable_map(record.state, record.tracks)
            assert check_trajectory(record.candidate, dmap, ObserverMode.COG).accepted

        out = write_run_outputs(result, tmp_path / "run")
        report = replay_log(out / "run.jsonl")
        assert report.ok, report.violations
        assert report.ticks == len(result.records)
