"""Tests for reachability module."""

from collections import deque

import numpy as np
import pytest

from safenav.fov import FovMap
from safenav.grid_map import GridMap, StaticCell, WorldPoint
from safenav.reachability import (
    CellClass,
    DrivableMap,
    ExtrapolationRequest,
    PedestrianTrack,
    build_drivable_map,
    effective_speed,
    extrapolate,
    footprint_cells,
    format_drivable_map,
    generations,
    seed_dynamic_map,
    seed_speeds,
)
from safenav.vehicle import VehicleParams, VehicleState


def _grid(cells: np.ndarray, resolution: float = 0.5) -> GridMap:
    height, width = cells.shape
    return GridMap(width, height, resolution, WorldPoint(0.0, 0.0), cells)


def _single_seed(
    size: int, col: int, row: int, walls: np.ndarray | None = None
) -> DrivableMap:
    cells = np.full((size, size), StaticCell.FREE, dtype=np.int8)
    if walls is not None:
        cells[walls] = StaticCell.WALL
    grid = _grid(cells)
    classes = np.where(
        grid.blocking_mask(), CellClass.STATIC_BLOCKED, CellClass.SAFE_DRIVABLE
    )
    classes[row, col] = CellClass.POTENTIAL_PEDESTRIAN
    return DrivableMap(grid, classes)


class TestGenerations:
    """Test cases for the generation count g = ceil(v·T / resolution)."""

    @pytest.mark.parametrize(
        "speed,horizon,resolution,expected",
        [
            (1.0, 1.5, 0.5, 3),
            (0.5, 1.0, 0.5, 1),
            (1.0, 1.25, 0.5, 3),
            (2.0, 2.5, 0.5, 10),
            (0.0, 2.5, 0.5, 0),
        ],
    )
    def test_generations(
        self, speed: float, horizon: float, resolution: float, expected: int
    ) -> None:
        """Exact multiples are not rounded up by float noise."""
        assert generations(speed, horizon, resolution) == expected


class TestEffectiveSpeed:
    """Test cases for the speed cap."""

    def test_untracked_is_capped_by_vehicle_speed(self) -> None:
        """An unseen pedestrian cannot be faster than the vehicle."""
        assert effective_speed(ExtrapolationRequest(1.5, 2.0, 1.0)) == 1.0
        assert effective_speed(ExtrapolationRequest(1.5, 0.5, 1.0)) == 0.5

    def test_tracked_speed_is_kept(self) -> None:
        """A measured speed overrides the cap, even when larger."""
        req = ExtrapolationRequest(1.5, 1.0, 0.5)
        track = PedestrianTrack(WorldPoint(1.0, 1.0), observed_speed=2.5)
        assert effective_speed(req, track) == 2.5
        assert effective_speed(req, PedestrianTrack(WorldPoint(1.0, 1.0))) == 0.5

    @pytest.mark.parametrize(
        "horizon,v_ped,v_vehicle",
        [(0.0, 1.0, 1.0), (1.0, -0.1, 1.0), (1.0, 1.0, -1.0)],
    )
    def test_invalid_request(
        self, horizon: float, v_ped: float, v_vehicle: float
    ) -> None:
        """Non-positive horizons and negative speeds are rejected."""
        with pytest.raises(ValueError):
            ExtrapolationRequest(horizon, v_ped, v_vehicle)


class TestSeeding:
    """Test cases for the initial pedestrian seeds."""

    def test_footprint_covers_two_by_two_cells(self) -> None:
        """A 1 m square centred on a cell center covers 2x2 cells at 0.5 m."""
        grid = _grid(np.zeros((6, 6), dtype=np.int8))
        mask = footprint_cells(grid, PedestrianTrack(WorldPoint(1.25, 1.25), 1.0))
        assert mask.sum() == 4
        assert mask[1:3, 1:3].all()

    def test_small_footprint_keeps_own_cell(self) -> None:
        """The cell under the pedestrian is always seeded."""
        grid = _grid(np.zeros((6, 6), dtype=np.int8))
        mask = footprint_cells(grid, PedestrianTrack(WorldPoint(1.1, 2.4), 0.01))
        assert mask.sum() == 1
        assert mask[4, 2]

    def test_seeds(self) -> None:
        """Occluded cells, entrances and tracks are seeded; walls stay blocked."""
        cells = np.zeros((4, 6), dtype=np.int8)
        cells[0, 0] = StaticCell.ENTRANCE
        cells[3, 5] = StaticCell.WALL
        grid = _grid(cells)
        visible = np.ones((4, 6), dtype=bool)
        visible[3, 4] = False
        visible[3, 5] = False
        track = PedestrianTrack(WorldPoint(1.75, 1.25), 0.1)

        dmap = seed_dynamic_map(grid, FovMap(visible), [track])

        assert dmap.cell_class((0, 0)) == CellClass.POTENTIAL_PEDESTRIAN
        assert dmap.cell_class((4, 3)) == CellClass.POTENTIAL_PEDESTRIAN
        assert dmap.cell_class((3, 2)) == CellClass.POTENTIAL_PEDESTRIAN
        assert dmap.cell_class((5, 3)) == CellClass.STATIC_BLOCKED
        assert dmap.potential_pedestrian.sum() == 3

    def test_fov_shape_mismatch(self) -> None:
        """The FoV map must match the grid."""
        grid = _grid(np.zeros((4, 6), dtype=np.int8))
        with pytest.raises(ValueError):
            seed_dynamic_map(grid, FovMap(np.ones((6, 4), dtype=bool)))


class TestExtrapolate:
    """Test cases for the cellular automaton."""

    def test_moore_spread(self) -> None:
        """g generations grow a seed into a (2g + 1)² square."""
        seeded = _single_seed(9, 4, 4)
        req = ExtrapolationRequest(1.0, 1.0, 1.0)  # g = 2
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req))
        expected = np.zeros((9, 9), dtype=bool)
        expected[2:7, 2:7] = True
        assert np.array_equal(dmap.potential_pedestrian, expected)

    def test_walls_stop_the_spread(self) -> None:
        """Nothing is reached through a full-height wall."""
        walls = np.zeros((9, 9), dtype=bool)
        walls[:, 3] = True
        seeded = _single_seed(9, 1, 4, walls)
        req = ExtrapolationRequest(2.0, 2.0, 2.0)  # g = 8
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req))
        assert dmap.potential_pedestrian[:, :3].all()
        assert not dmap.potential_pedestrian[:, 3:].any()
        assert (dmap.classes[:, 3] == CellClass.STATIC_BLOCKED).all()

    def test_zero_speed_keeps_seeds(self) -> None:
        """A vehicle at rest caps untracked spreading at zero."""
        seeded = _single_seed(9, 4, 4)
        req = ExtrapolationRequest(2.0, 1.0, 0.0)
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req))
        assert dmap == seeded

    def test_tracked_pedestrian_spreads_further(self) -> None:
        """Cells under a faster tracked pedestrian use the observed speed."""
        seeded = _single_seed(15, 7, 7)
        track = PedestrianTrack(WorldPoint(3.75, 3.75), 0.1, observed_speed=2.0)
        req = ExtrapolationRequest(1.0, 1.0, 0.5)  # untracked g = 1, tracked g = 4
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req, [track]))
        assert dmap.potential_pedestrian.sum() == 81

    @pytest.mark.parametrize("observed,expected", [(0.0, 4), (0.5, 16), (2.0, 100)])
    def test_tracked_pedestrian_keeps_observed_speed(
        self, observed: float, expected: int
    ) -> None:
        """A visible tracked pedestrian spreads with its own speed, even if slower."""
        grid = _grid(np.zeros((20, 20), dtype=np.int8))
        fov = FovMap(np.ones((20, 20), dtype=bool))
        track = PedestrianTrack(WorldPoint(7.25, 7.25), 1.0, observed_speed=observed)
        req = ExtrapolationRequest(1.0, 1.0, 1.0)  # untracked g = 2
        seeded = seed_dynamic_map(grid, fov, [track])
        speeds = seed_speeds(seeded, req, [track], fov)
        dmap = extrapolate(seeded, req, speeds)
        assert dmap.potential_pedestrian.sum() == expected

    def test_occluded_track_keeps_the_cap(self) -> None:
        """A track inside unseen space spreads at least with the capped speed."""
        grid = _grid(np.zeros((20, 20), dtype=np.int8))
        visible = np.ones((20, 20), dtype=bool)
        visible[14:16, 14:16] = False
        fov = FovMap(visible)
        track = PedestrianTrack(WorldPoint(7.25, 7.25), 1.0, observed_speed=0.0)
        req = ExtrapolationRequest(1.0, 1.0, 1.0)
        seeded = seed_dynamic_map(grid, fov, [track])
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req, [track], fov))
        assert dmap.potential_pedestrian.sum() == 36
        assert dmap.potential_pedestrian[12:18, 12:18].all()

    def test_extrapolation_only_adds(self) -> None:
        """Every seed stays a potential pedestrian cell."""
        seeded = _single_seed(9, 0, 0)
        req = ExtrapolationRequest(1.5, 1.0, 1.0)
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req))
        assert (dmap.potential_pedestrian | ~seeded.potential_pedestrian).all()
        assert dmap.potential_pedestrian.sum() == 16


class TestBuildDrivableMap:
    """Test cases for the one-call drivable map."""

    def test_open_room_with_track(self) -> None:
        """A detected pedestrian is dilated by the capped speed.

        The 10 m x 10 m room is fully visible, so only the track seeds.
        """
        grid = _grid(np.zeros((20, 20), dtype=np.int8))
        state = VehicleState(3.0, 3.0, 0.0, 1.0)
        track = PedestrianTrack(WorldPoint(7.25, 7.25), 1.0)
        req = ExtrapolationRequest(1.0, 1.0, state.v)  # g = 2

        dmap = build_drivable_map(grid, state, VehicleParams(), req, [track])

        assert dmap.potential_pedestrian.sum() == 36
        assert dmap.potential_pedestrian[11:17, 11:17].all()
        assert dmap.cell_class((6, 6)) == CellClass.SAFE_DRIVABLE

    def test_format(self) -> None:
        """Rendering uses one character per class, northmost row first."""
        walls = np.zeros((3, 3), dtype=bool)
        walls[0, 0] = True
        dmap = _single_seed(3, 2, 2, walls)
        assert format_drivable_map(dmap) == "..P\n...\n#..\n"


def _random_seeded(seed: int, size: int = 25) -> DrivableMap:
    rng = np.random.default_rng(seed)
    walls = rng.random((size, size)) < 0.2
    seeds = (rng.random((size, size)) < 0.03) & ~walls
    cells = np.where(walls, StaticCell.WALL, StaticCell.FREE).astype(np.int8)
    classes = np.where(walls, CellClass.STATIC_BLOCKED, CellClass.SAFE_DRIVABLE)
    classes[seeds] = CellClass.POTENTIAL_PEDESTRIAN
    return DrivableMap(_grid(cells), classes.astype(np.int8))


def _breadth_first_reach(
    passable: np.ndarray, seeds: np.ndarray, depth: int
) -> np.ndarray:
    """Cells within ``depth`` king moves of a seed through passable cells."""
    height, width = passable.shape
    dist = np.full(passable.shape, -1)
    queue = deque()
    for row, col in zip(*np.nonzero(seeds), strict=True):
        dist[row, col] = 0
        queue.append((row, col))
    while queue:
        row, col = queue.popleft()
        if dist[row, col] == depth:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                r, c = row + dr, col + dc
                if 0 <= r < height and 0 <= c < width and passable[r, c]:
                    if dist[r, c] < 0:
                        dist[r, c] = dist[row, col] + 1
                        queue.append((r, c))
    return dist >= 0


class TestRandomMaps:
    """The automaton against a breadth-first search on random maps."""

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_breadth_first_search(self, seed: int) -> None:
        rng = np.random.default_rng(100 + seed)
        seeded = _random_seeded(seed)
        req = ExtrapolationRequest(
            float(rng.choice([0.5, 1.0, 1.5, 2.0])),
            float(rng.uniform(0.2, 2.0)),
            float(rng.uniform(0.0, 2.0)),
        )
        depth = generations(effective_speed(req), req.horizon, 0.5)
        dmap = extrapolate(seeded, req, seed_speeds(seeded, req))

        passable = seeded.classes != CellClass.STATIC_BLOCKED
        expected = _breadth_first_reach(passable, seeded.potential_pedestrian, depth)
        assert np.array_equal(dmap.potential_pedestrian, expected)
        assert (dmap.classes[~passable] == CellClass.STATIC_BLOCKED).all()

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize(
        "small,large",
        [
            ((1.0, 1.0, 1.0), (2.0, 1.0, 1.0)),
            ((1.5, 0.5, 2.0), (1.5, 1.5, 2.0)),
            ((1.5, 2.0, 0.3), (1.5, 2.0, 1.2)),
        ],
        ids=["horizon", "pedestrian_speed", "vehicle_speed"],
    )
    def test_monotone_in_horizon_and_speeds(
        self, seed: int, small: tuple, large: tuple
    ) -> None:
        """A longer horizon or a higher speed bound never removes a cell."""
        seeded = _random_seeded(seed)
        low, high = ExtrapolationRequest(*small), ExtrapolationRequest(*large)
        reached_low = extrapolate(seeded, low, seed_speeds(seeded, low))
        reached_high = extrapolate(seeded, high, seed_speeds(seeded, high))
        low_cells = reached_low.potential_pedestrian
        high_cells = reached_high.potential_pedestrian
        assert not (low_cells & ~high_cells).any()
        assert high_cells.sum() >= low_cells.sum()
