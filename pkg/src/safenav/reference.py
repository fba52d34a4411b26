"""Waypoint path and per-stage reference states.

The path is a list of waypoints (x, y, h, κ) with a constant Euclidean gap Δp.
Each waypoint gets a reference speed min(v_max, sqrt(ā_lat / |κ|)), and the
reference index moves along the path by floor(v_p · T_s / Δp) per stage.

Note:
    With that literal floor the index does not move when v_p · T_s < Δp, so a
    path only makes progress if it is sampled with Δp <= v_p · T_s.
"""

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PathValidationError
from .vehicle import VehicleState

GAP_TOLERANCE = 1e-6
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class Waypoint:
    """Path sample: position (m), heading h (rad) and curvature κ (1/m)."""

    x: float
    y: float
    h: float
    kappa: float = 0.0


@dataclass(frozen=True)
class ReferencePath:
    """Validated waypoint path with its constant gap Δp (m)."""

    waypoints: tuple[Waypoint, ...]
    spacing: float

    def __len__(self) -> int:
        return len(self.waypoints)

    def positions(self) -> np.ndarray:
        return np.array([[w.x, w.y] for w in self.waypoints])

    @property
    def goal(self) -> Waypoint:
        return self.waypoints[-1]


@dataclass(frozen=True)
class ReferenceState:
    """Reference (x, y, h, v_p) for one horizon stage."""

    x: float
    y: float
    h: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h, self.v], dtype=float)


def validate_path(waypoints: Sequence[Waypoint]) -> ReferencePath:
    """Check that consecutive waypoints are equally spaced.

    Raises:
        PathValidationError: If there are fewer than two waypoints, a
            non-finite value, a zero gap, or a gap deviating from the first one
            by more than 1e-6 · Δp.
    """
    waypoints = tuple(waypoints)
    if len(waypoints) < 2:
        raise PathValidationError("a path needs at least two waypoints", len(waypoints))
    for i, w in enumerate(waypoints):
        if not all(math.isfinite(value) for value in (w.x, w.y, w.h, w.kappa)):
            raise PathValidationError("non-finite waypoint value", i)

    xy = np.array([[w.x, w.y] for w in waypoints])
    gaps = np.hypot(*np.diff(xy, axis=0).T)
    spacing = float(gaps[0])
    if spacing <= 0:
        raise PathValidationError("consecutive waypoints coincide", 1)
    deviation = np.abs(gaps - spacing) > GAP_TOLERANCE * spacing
    if deviation.any():
        index = int(deviation.argmax()) + 1
        raise PathValidationError(
            f"gap {gaps[index - 1]:.9g} m differs from {spacing:.9g} m", index
        )
    return ReferencePath(waypoints=waypoints, spacing=spacing)


def reference_speed(
    kappa: float, max_lateral_acceleration: float, v_max: float
) -> float:
    """Curvature-limited reference speed min(v_max, sqrt(ā_lat / |κ|))."""
    if not max_lateral_acceleration > 0:
        raise ValueError(
            "max_lateral_acceleration must be positive, "
            f"got {max_lateral_acceleration}"
        )
    if kappa == 0:
        return v_max
    return min(v_max, math.sqrt(max_lateral_acceleration / abs(kappa)))


def path_speeds(
    path: ReferencePath,
    max_lateral_acceleration: float,
    v_max: float,
    braking_deceleration: float | None = None,
    creep_speed: float = 0.0,
) -> np.ndarray:
    """Reference speed at every waypoint; zero at the final one.

    Args:
        path: Validated path.
        max_lateral_acceleration: ā_lat (m/s²).
        v_max: Speed cap (m/s).
        braking_deceleration: If set, speeds are further capped by
            sqrt(2 · a · s) with s the arc length left to the goal, so the
            profile ramps down to the stop instead of dropping at the end.
        creep_speed: Lower bound of that braking cap before the final
            waypoint (m/s). Use Δp / T_s to keep the horizon index moving.

    Raises:
        ValueError: If braking_deceleration is not positive.
    """
    speeds = np.array(
        [
            reference_speed(w.kappa, max_lateral_acceleration, v_max)
            for w in path.waypoints
        ]
    )
    if braking_deceleration is not None:
        if not braking_deceleration > 0:
            raise ValueError(
                f"braking_deceleration must be positive, got {braking_deceleration}"
            )
        remaining = path.spacing * np.arange(len(path) - 1, -1, -1)
        cap = np.maximum(np.sqrt(2 * braking_deceleration * remaining), creep_speed)
        speeds = np.minimum(speeds, cap)
    speeds[-1] = 0.0
    return speeds


def nearest_index(path: ReferencePath, state: VehicleState) -> int:
    """Index of the waypoint closest to the vehicle; ties go to the lowest."""
    xy = path.positions()
    distances = np.hypot(xy[:, 0] - state.x, xy[:, 1] - state.y)
    return int(np.argmin(distances))


def horizon_indices(
    path: ReferencePath,
    start: int,
    sample_time: float,
    n_stages: int,
    speeds: np.ndarray,
) -> list[int]:
    """Path index of every stage, j_{k+1} = j_k + floor(v_{p,j_k} T_s / Δp)."""
    if not 0 <= start < len(path):
        raise IndexError(f"start index {start} outside path of {len(path)} waypoints")
    last = len(path) - 1
    indices = [start]
    for _ in range(n_stages):
        j = indices[-1]
        advance = math.floor(speeds[j] * sample_time / path.spacing + _FLOOR_EPS)
        indices.append(min(j + advance, last))
    return indices


def horizon_reference(
    path: ReferencePath,
    start: int,
    sample_time: float,
    n_stages: int,
    max_lateral_acceleration: float,
    v_max: float,
    braking_deceleration: float | None = None,
) -> list[ReferenceState]:
    """N + 1 reference states starting at path index ``start``.

    With ``braking_deceleration`` the speeds ramp down towards the goal but
    never below Δp / T_s before it, the slowest speed that still advances the
    index.
    """
    speeds = path_speeds(
        path,
        max_lateral_acceleration,
        v_max,
        braking_deceleration,
        creep_speed=path.spacing / sample_time,
    )
    indices = horizon_indices(path, start, sample_time, n_stages, speeds)
    return [
        ReferenceState(
            path.waypoints[j].x, path.waypoints[j].y, path.waypoints[j].h, speeds[j]
        )
        for j in indices
    ]


def build_turtle_path(
    start: tuple[float, float, float],
    segments: Iterable[tuple[float, float]],
    spacing: float,
) -> ReferencePath:
    """Path with exactly constant gaps from piecewise-constant curvature.

    Every step moves ``spacing`` along the chord of a circular arc, so straight
    lines and arcs join without gap changes.

    Args:
        start: Initial (x, y, heading).
        segments: (length, curvature) pairs; each length is rounded to a whole
            number of steps.
        spacing: Gap Δp between waypoints (m).
    """
    x, y, h = start
    waypoints: list[Waypoint] = []
    kappa = 0.0
    for length, kappa in segments:
        for _ in range(max(1, round(length / spacing))):
            waypoints.append(Waypoint(x, y, h, kappa))
            chord = h + kappa * spacing / 2
            x += spacing * math.cos(chord)
            y += spacing * math.sin(chord)
            h += kappa * spacing
    waypoints.append(Waypoint(x, y, h, kappa))
    return validate_path(waypoints)


def parse_path(text: str) -> ReferencePath:
    """Parse ``x y h kappa`` lines; blank lines and ``#`` comments are skipped."""
    waypoints = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        parts = content.split()
        if len(parts) != 4:
            raise ValueError(f"line {line_no}: expected 'x y h kappa', got {line!r}")
        try:
            waypoints.append(Waypoint(*(float(p) for p in parts)))
        except ValueError as err:
            raise ValueError(f"line {line_no}: invalid number in {line!r}") from err
    return validate_path(waypoints)


def format_path(path: ReferencePath) -> str:
    return "".join(
        f"{float(w.x)!r} {float(w.y)!r} {float(w.h)!r} {float(w.kappa)!r}\n"
        for w in path.waypoints
    )


def load_path(path: str | Path) -> ReferencePath:
    """Read and validate a path file."""
    return parse_path(Path(path).read_text(encoding="ascii"))
