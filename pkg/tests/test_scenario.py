"""Tests for scenario module."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from safenav.errors import ScenarioConfigError
from safenav.fov import FovMap
from safenav.grid_map import GridMap, StaticCell, WorldPoint
from safenav.observer import CommandSource, ObserverMode
from safenav.reference import build_turtle_path
from safenav.scenario import (
    TICK_COLUMNS,
    PedestrianAgent,
    PedestrianSpec,
    ScenarioConfig,
    ScriptLeg,
    goal_reached,
    load_scenario,
    plant_step,
    run_scenario,
    write_run_outputs,
)
from safenav.vehicle import ControlInput, VehicleParams, VehicleState


@pytest.fixture
def base(room_scenario: Path) -> dict:
    return yaml.safe_load(room_scenario.read_text())


class TestScenarioConfig:
    """Test cases for parsing and validating scenario files."""

    def test_load_scenario(self, room_scenario: Path) -> None:
        """Defaults fill in everything the file leaves out."""
        config = load_scenario(room_scenario)
        assert config.name == "room"
        assert config.map_path == (room_scenario.parent / "room.map").resolve()
        assert config.start == VehicleState(3.0, 5.0, 0.0, 0.0)
        assert config.n_stages == 15
        assert config.horizon_time == pytest.approx(1.5)
        assert config.observer_mode == ObserverMode.COG
        assert config.tick_limit == 5
        assert config.solver == "admm"

    @pytest.mark.parametrize("horizon,n_stages", [(1.0, 10), (2.5, 25), (0.3, 3)])
    def test_horizon_sets_stage_count(
        self, base: dict, room_scenario: Path, horizon: float, n_stages: int
    ) -> None:
        config = ScenarioConfig.from_dict(
            {**base, "horizon": horizon}, room_scenario.parent
        )
        assert config.n_stages == n_stages

    @pytest.mark.parametrize(
        "changes,message",
        [
            ({"horizon": 1.55}, "multiple"),
            ({"horizon": -1.0}, "positive"),
            ({"map": "missing.map"}, "does not exist"),
            ({"path": None}, "path is required"),
            ({"start": {"x": 1.0}}, "start"),
            ({"colour": "red"}, "unknown scenario keys"),
            ({"vehicle": {"wheelbase": 2.0}}, "vehicle"),
            ({"limits": {"v_min": 3.0, "v_max": 1.0}}, "limits"),
            ({"weights": {"Q": [1.0, 1.0, 1.0, 1.0]}}, "weights"),
            ({"observer_mode": "radar"}, "radar"),
            ({"pedestrians": [{"y": 1.0}]}, "pedestrian"),
            ({"buffer": -0.5}, "buffer"),
            ({"braking_deceleration": -1.0}, "braking_deceleration"),
        ],
    )
    def test_invalid_scenarios(
        self, base: dict, room_scenario: Path, changes: dict, message: str
    ) -> None:
        with pytest.raises(ScenarioConfigError, match=message):
            ScenarioConfig.from_dict({**base, **changes}, room_scenario.parent)

    def test_braking_ramp_setting(self, base: dict, room_scenario: Path) -> None:
        """The ramp defaults to 1 m/s² and an explicit null turns it off."""
        assert load_scenario(room_scenario).braking_deceleration == 1.0
        off = ScenarioConfig.from_dict(
            {**base, "braking_deceleration": None}, room_scenario.parent
        )
        assert off.braking_deceleration is None
        again = ScenarioConfig.from_dict(off.to_dict())
        assert again.braking_deceleration is None

    def test_pedestrians_and_sections(self, base: dict, room_scenario: Path) -> None:
        data = {
            **base,
            "vehicle": {"width": 2.0},
            "weights": {"Q": [1.0, 1.0, 1.0, 1.0], "R": [0.5, 0.5]},
            "pedestrians": [
                {
                    "x": 8.0,
                    "y": 2.0,
                    "tracked": True,
                    "script": [{"until": 2.0, "vy": 1.0}, {"vx": -0.5}],
                }
            ],
        }
        config = ScenarioConfig.from_dict(data, room_scenario.parent)
        assert config.vehicle.width == 2.0
        assert config.vehicle.l_f == 1.82
        assert np.diag(config.weights.R).tolist() == [0.5, 0.5]
        (pedestrian,) = config.pedestrians
        assert pedestrian.tracked
        assert pedestrian.script == (
            ScriptLeg(2.0, 0.0, 1.0),
            ScriptLeg(None, -0.5, 0.0),
        )

    def test_to_dict_round_trip(self, room_scenario: Path) -> None:
        """to_dict output is accepted by from_dict and describes the same run."""
        config = replace(load_scenario(room_scenario), horizon=2.0, buffer=0.25)
        again = ScenarioConfig.from_dict(config.to_dict())
        assert again.to_dict() == config.to_dict()


class TestPedestrians:
    """Test cases for scripted pedestrians."""

    def test_velocity_script(self) -> None:
        spec = PedestrianSpec(0.0, 0.0, script=(ScriptLeg(1.0, 1.0, 0.0),))
        assert spec.velocity_at(0.5) == (1.0, 0.0)
        assert spec.velocity_at(1.0) == (0.0, 0.0)

    def test_move_stops_at_walls(self) -> None:
        cells = np.zeros((4, 4), dtype=np.int8)
        cells[:, 2] = StaticCell.WALL
        grid = GridMap(4, 4, 1.0, WorldPoint(0.0, 0.0), cells)
        agent = PedestrianAgent(
            PedestrianSpec(0.5, 0.5, script=(ScriptLeg(None, 1.0, 0.0),))
        )
        agent.move(grid, 0.0, 0.5)
        assert agent.position == WorldPoint(1.0, 0.5)
        agent.move(grid, 0.5, 1.0)
        assert agent.position == WorldPoint(1.0, 0.5)

    def test_track_only_when_visible(self) -> None:
        grid = GridMap(4, 4, 1.0, WorldPoint(0.0, 0.0), np.zeros((4, 4)))
        agent = PedestrianAgent(
            PedestrianSpec(2.5, 1.5, tracked=True, script=(ScriptLeg(None, 0.3, 0.4),))
        )
        visible = np.ones((4, 4), dtype=bool)
        track = agent.track(FovMap(visible), grid, 0.0)
        assert track.position == WorldPoint(2.5, 1.5)
        assert track.observed_speed == pytest.approx(0.5)
        visible[1, 2] = False
        assert agent.track(FovMap(visible), grid, 0.0) is None


class TestPlant:
    def test_plant_never_rolls_backwards(self) -> None:
        state = plant_step(
            VehicleState(0.0, 0.0, 0.0, 0.1), ControlInput(0.0, -7.0), VehicleParams()
        )
        assert state.v == 0.0
        assert state.x == pytest.approx(0.01)

    def test_goal_needs_position_and_rest(self) -> None:
        path = build_turtle_path((0.0, 0.0, 0.0), [(1.0, 0.0)], 0.2)
        assert goal_reached(VehicleState(1.0, 0.05, 0.0, 0.0), path, 0.2)
        assert not goal_reached(VehicleState(1.0, 0.0, 0.0, 0.5), path, 0.2)
        assert not goal_reached(VehicleState(0.7, 0.0, 0.0, 0.0), path, 0.2)


class TestRunScenario:
    """Closed-loop runs in the open room."""

    def test_short_run(self, room_scenario: Path) -> None:
        """Five ticks with no pedestrians: the vehicle sets off, nothing overlaps."""
        result = run_scenario(load_scenario(room_scenario))
        report = result.report

        assert report.ticks == 5
        assert not report.goal_reached
        assert report.accepted + report.rejected + report.absent == 5
        assert report.max_overlap == 0.0
        assert report.severity.label == "safe"
        assert report.final_state.x > 3.0
        assert result.initial_plan.horizon == 15
        first = result.records[0]
        assert first.state == VehicleState(3.0, 5.0, 0.0, 0.0)
        assert len(first.free_distances) == 5
        assert first.constraints[0] is None
        assert all(
            r.source in (CommandSource.CANDIDATE, CommandSource.FALLBACK)
            for r in result.records
        )
        assert list(result.tick_table().columns) == TICK_COLUMNS

    def test_start_at_goal(self, room_scenario: Path) -> None:
        config = replace(
            load_scenario(room_scenario), start=VehicleState(15.0, 5.0, 0.0, 0.0)
        )
        result = run_scenario(config)
        assert result.report.goal_reached
        assert result.report.ticks == 0
        assert result.records == ()

    @pytest.mark.slow
    def test_run_to_goal(self, room_scenario: Path) -> None:
        """The vehicle stops within Δp of the goal instead of running past it."""
        config = replace(load_scenario(room_scenario), tick_limit=300)
        result = run_scenario(config)
        final = result.report.final_state
        assert result.report.goal_reached
        assert abs(final.x - 15.0) < 0.2
        assert final.v < 0.05

    def test_write_outputs(self, room_scenario: Path, tmp_path: Path) -> None:
        result = run_scenario(load_scenario(room_scenario))
        out = write_run_outputs(result, tmp_path / "out")

        ticks = pd.read_csv(out / "ticks.csv")
        assert len(ticks) == 5
        assert list(ticks.columns) == TICK_COLUMNS

        lines = (out / "run.jsonl").read_text().splitlines()
        assert len(lines) == 6
        header = json.loads(lines[0])
        assert header["type"] == "header"
        assert header["initial_verdict"] == "accepted"
        assert header["n_stages"] == 15
        assert json.loads(lines[1])["tick"] == 0

        report = yaml.safe_load((out / "report.yaml").read_text())
        assert report["name"] == "room"
        assert report["ticks"] == 5
        assert report["severity"] == "safe"

    def test_runs_are_byte_identical(self, room_scenario: Path, tmp_path: Path) -> None:
        """Two runs of the same scenario write the same log."""
        config = load_scenario(room_scenario)
        first = write_run_outputs(run_scenario(config), tmp_path / "first")
        second = write_run_outputs(run_scenario(config), tmp_path / "second")
        for name in ("run.jsonl", "ticks.csv", "report.yaml"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
