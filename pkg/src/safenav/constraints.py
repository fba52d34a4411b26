"""Per-stage position half-spaces and box limits for the NMPC.

Every stage of the previous trajectory is measured left and right, perpendicular
to its own heading, and the measured free distances become two half-spaces that
bound the stage position to a slab. A single front half-space, perpendicular
to the reference heading at the last stage, keeps every stage behind the
forward boundary.
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .advisor import FRONT, LEFT, RIGHT, AdvisorRequest, BoundarySet
from .errors import ConstraintBuildError
from .reference import ReferenceState
from .vehicle import ControlInput, VehicleState

Advisor = Callable[[VehicleState, AdvisorRequest], BoundarySet]

_UNIT_TOLERANCE = 1e-9

# Planes sit this far (m) inside the measured free space: a measured boundary lies
# on the edge of a non-safe cell, and QP solutions meet constraints only to
# within the solver tolerance.
BOUNDARY_INSET = 1e-3


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Points p with normal · p <= offset."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = np.array(self.normal, dtype=float)
        if normal.shape != (2,):
            raise ValueError(f"normal must be a 2-vector, got shape {normal.shape}")
        if abs(np.linalg.norm(normal) - 1.0) > _UNIT_TOLERANCE:
            raise ValueError(f"normal must be a unit vector, got {normal.tolist()}")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HalfSpace):
            return NotImplemented
        return np.array_equal(self.normal, other.normal) and self.offset == other.offset

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return halfspace_violation(self, point) <= tol

    def to_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @classmethod
    def from_dict(cls, data: dict) -> "HalfSpace":
        return cls(np.asarray(data["normal"], dtype=float), data["offset"])


@dataclass(frozen=True)
class StageConstraints:
    left: HalfSpace
    right: HalfSpace
    front: HalfSpace | None = None

    def halfspaces(self) -> list[HalfSpace]:
        spaces = [self.left, self.right]
        if self.front is not None:
            spaces.append(self.front)
        return spaces

    def to_dict(self) -> dict:
        return {
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "front": None if self.front is None else self.front.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StageConstraints":
        front = data.get("front")
        return cls(
            left=HalfSpace.from_dict(data["left"]),
            right=HalfSpace.from_dict(data["right"]),
            front=None if front is None else HalfSpace.from_dict(front),
        )


@dataclass(frozen=True)
class BoxLimits:
    """Bounds on heading rate, speed, steering and acceleration.

    Attributes:
        heading_rate: Largest heading change between stages Δψ_max (rad).
        v_min, v_max: Speed bounds (m/s).
        delta_min, delta_max: Steering bounds (rad).
        a_min, a_max: Acceleration bounds (m/s²).
    """

    heading_rate: float = math.pi / 4
    v_min: float = 0.0
    v_max: float = 5.56
    delta_min: float = -math.pi / 4
    delta_max: float = math.pi / 4
    a_min: float = -7.0
    a_max: float = 3.0

    def __post_init__(self) -> None:
        if not self.heading_rate >= 0:
            raise ValueError(
                f"heading_rate must be non-negative, got {self.heading_rate}"
            )
        pairs = (("v_min", "v_max"), ("delta_min", "delta_max"), ("a_min", "a_max"))
        for low, high in pairs:
            lo, hi = getattr(self, low), getattr(self, high)
            if not lo <= hi:
                raise ValueError(f"{low}={lo} must not exceed {high}={hi}")
        if not -math.pi / 2 < self.delta_min <= self.delta_max < math.pi / 2:
            raise ValueError("steering bounds must lie inside (-pi/2, pi/2)")


def halfspace_violation(halfspace: HalfSpace, point: Sequence[float]) -> float:
    """How far (m) a point lies outside the half-space; 0 when inside."""
    value = float(halfspace.normal @ np.asarray(point, dtype=float)[:2])
    return max(value - halfspace.offset, 0.0)


def _ray_distance(boundaries: BoundarySet, heading: float, name: str) -> float:
    for entry in boundaries.entries:
        if math.isclose(entry.heading, heading, abs_tol=1e-12):
            return entry.distance
    raise ConstraintBuildError(f"boundary set has no {name} direction")


def lateral_halfspaces(
    heading: float,
    position: Sequence[float],
    boundaries: BoundarySet,
    margin: float = 0.0,
) -> tuple[HalfSpace, HalfSpace]:
    """Left and right half-spaces aligned with a stage heading.

    Each plane sits at the measured lateral free distance minus ``margin`` from
    the stage position; a non-positive remainder puts the plane through the
    stage position itself.

    Raises:
        ConstraintBuildError: If the left or right direction is missing.
    """
    left_free = _ray_distance(boundaries, LEFT, "left")
    right_free = _ray_distance(boundaries, RIGHT, "right")
    p = np.asarray(position, dtype=float)[:2]
    normal = np.array([-math.sin(heading), math.cos(heading)])
    left = HalfSpace(normal, normal @ p + max(left_free - margin, 0.0))
    right = HalfSpace(-normal, -normal @ p + max(right_free - margin, 0.0))
    return left, right


def front_halfspace(
    reference_heading: float, boundary_point: Sequence[float], inset: float = 0.0
) -> HalfSpace:
    """Plane facing along the reference, ``inset`` behind the boundary point."""
    normal = np.array([math.cos(reference_heading), math.sin(reference_heading)])
    point = np.asarray(boundary_point, dtype=float)[:2]
    return HalfSpace(normal, normal @ point - inset)


def check_box(
    stage: tuple[VehicleState, ControlInput],
    following: tuple[VehicleState, ControlInput],
    limits: BoxLimits,
    tol: float = 0.0,
) -> bool:
    """Whether two consecutive stages respect the box limits (closed bounds).

    The heading rate is checked between the stages, the speed at both, and the
    inputs of the first stage.
    """
    state, control = stage
    next_state, _ = following
    return (
        abs(next_state.psi - state.psi) <= limits.heading_rate + tol
        and all(
            limits.v_min - tol <= v <= limits.v_max + tol
            for v in (state.v, next_state.v)
        )
        and limits.delta_min - tol <= control.delta <= limits.delta_max + tol
        and limits.a_min - tol <= control.a <= limits.a_max + tol
    )


def build_stage_constraints(
    states: np.ndarray,
    refs: Sequence[ReferenceState],
    advisor: Advisor,
    buffer: float = 0.0,
    margin: float = 0.0,
    inset: float = BOUNDARY_INSET,
) -> list[StageConstraints | None]:
    """Position constraints for every stage of the horizon.

    Args:
        states: Previous (or seed) trajectory states, shape (N + 1, 4).
        refs: The N + 1 stage references.
        advisor: Boundary service, called with a pose and a request. Only the
            returned boundary points reach the controller.
        buffer: Distance kept from potential pedestrian cells (m).
        margin: Extra lateral clearance, e.g. the vehicle half width (m).
        inset: Distance every plane is pulled back from its boundary (m).

    Returns:
        One entry per stage. Stage 0 is the measured state and carries None.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[1] != 4 or len(states) != len(refs):
        raise ConstraintBuildError(
            f"states of shape {states.shape} do not match {len(refs)} references"
        )

    last = states[-1]
    forward_pose = VehicleState(last[0], last[1], refs[-1].h, last[3])
    forward = advisor(forward_pose, AdvisorRequest((FRONT,), buffer))
    front = front_halfspace(refs[-1].h, forward.entries[0].point, inset)

    lateral_request = AdvisorRequest((LEFT, RIGHT), buffer)
    stages: list[StageConstraints | None] = [None]
    for x, y, psi, v in states[1:]:
        boundaries = advisor(VehicleState(x, y, psi, v), lateral_request)
        left, right = lateral_halfspaces(psi, (x, y), boundaries, margin + inset)
        stages.append(StageConstraints(left, right, front))
    return stages
