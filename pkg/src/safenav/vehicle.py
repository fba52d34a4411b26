"""Discrete-time kinematic bicycle model.

    x⁺ = x + v cos(ψ + β) T_s
    y⁺ = y + v sin(ψ + β) T_s
    ψ⁺ = ψ + (v / l_r) sin(β) T_s
    v⁺ = v + a T_s

with slip angle β = atan(l_r / (l_f + l_r) · tan δ). The same forward-Euler
model is the simulation plant and the controller's prediction model.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SlipAngleDomainError

N_STATES = 4
N_INPUTS = 2


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and sampling time of the vehicle.

    Attributes:
        l_f: Distance from the center of gravity to the front axle (m).
        l_r: Distance from the center of gravity to the rear axle (m).
        width: Body width (m).
        sample_time: Controller and simulation step T_s (s).
        front_overhang: Body length ahead of the front axle (m).
        rear_overhang: Body length behind the rear axle (m).
    """

    l_f: float = 1.82
    l_r: float = 1.0
    width: float = 1.8
    sample_time: float = 0.1
    front_overhang: float = 0.9
    rear_overhang: float = 0.9

    def __post_init__(self) -> None:
        for name in ("l_f", "l_r", "width", "sample_time"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive, got {value}")
        for name in ("front_overhang", "rear_overhang"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be non-negative, got {value}")

    @property
    def front_extent(self) -> float:
        """Distance from the center of gravity to the front bumper (m)."""
        return self.l_f + self.front_overhang

    @property
    def rear_extent(self) -> float:
        """Distance from the center of gravity to the rear bumper (m)."""
        return self.l_r + self.rear_overhang

    @property
    def length(self) -> float:
        return self.front_extent + self.rear_extent


@dataclass(frozen=True)
class VehicleState:
    """State ξ = (x, y, ψ, v) at the center of gravity."""

    x: float
    y: float
    psi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "VehicleState":
        x, y, psi, v = (float(value) for value in values)
        return cls(x, y, psi, v)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ControlInput:
    """Steering angle δ (rad) and acceleration a (m/s²)."""

    delta: float = 0.0
    a: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.a], dtype=float)


FULL_STOP = ControlInput(0.0, 0.0)


@dataclass(frozen=True)
class LinearizedDynamics:
    """Affine model ξ⁺ ≈ A ξ + B u + c, exact at its linearization point."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray


def slip_angle(delta: float, params: VehicleParams) -> float:
    """Slip angle β of the center of gravity for steering angle δ.

    Raises:
        SlipAngleDomainError: If |δ| >= π/2.
    """
    if not abs(delta) < math.pi / 2:
        raise SlipAngleDomainError(f"steering angle {delta} outside (-pi/2, pi/2)")
    return math.atan(params.l_r / (params.l_f + params.l_r) * math.tan(delta))


def _slip_angle_derivative(delta: float, params: VehicleParams) -> float:
    k = params.l_r / (params.l_f + params.l_r)
    tan_delta = math.tan(delta)
    return k * (1.0 + tan_delta**2) / (1.0 + (k * tan_delta) ** 2)


def step(state: VehicleState, u: ControlInput, params: VehicleParams) -> VehicleState:
    """Advance the bicycle model by one sample time."""
    beta = slip_angle(u.delta, params)
    ts = params.sample_time
    return VehicleState(
        x=state.x + state.v * math.cos(state.psi + beta) * ts,
        y=state.y + state.v * math.sin(state.psi + beta) * ts,
        psi=state.psi + state.v / params.l_r * math.sin(beta) * ts,
        v=state.v + u.a * ts,
    )


def linearize(
    state: VehicleState, u: ControlInput, params: VehicleParams
) -> LinearizedDynamics:
    """Analytic Jacobians of step() around (state, u).

    Returns:
        A (4x4), B (4x2) and the residual c = step(state, u) - A ξ - B u.
    """
    beta = slip_angle(u.delta, params)
    dbeta = _slip_angle_derivative(u.delta, params)
    ts = params.sample_time
    v = state.v
    heading = state.psi + beta
    cos_h, sin_h = math.cos(heading), math.sin(heading)

    A = np.eye(N_STATES)
    A[0, 2] = -v * sin_h * ts
    A[0, 3] = cos_h * ts
    A[1, 2] = v * cos_h * ts
    A[1, 3] = sin_h * ts
    A[2, 3] = math.sin(beta) / params.l_r * ts

    B = np.zeros((N_STATES, N_INPUTS))
    B[0, 0] = -v * sin_h * dbeta * ts
    B[1, 0] = v * cos_h * dbeta * ts
    B[2, 0] = v / params.l_r * math.cos(beta) * dbeta * ts
    B[3, 1] = ts

    xi = state.as_array()
    c = step(state, u, params).as_array() - A @ xi - B @ u.as_array()
    return LinearizedDynamics(A=A, B=B, c=c)


def footprint_corners(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """Corners of the oriented body rectangle, counter-clockwise, shape (4, 2)."""
    half_width = params.width / 2
    local = np.array(
        [
            [-params.rear_extent, -half_width],
            [params.front_extent, -half_width],
            [params.front_extent, half_width],
            [-params.rear_extent, half_width],
        ]
    )
    return _to_world(local, state)


def footprint_samples(
    state: VehicleState, params: VehicleParams, spacing: float
) -> np.ndarray:
    """Regular grid of points covering the body rectangle, shape (n, 2).

    Each sample stands for an equal share of the rectangle's area, so the mean
    of any per-sample indicator is an area fraction.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    n_long = max(1, math.ceil(params.length / spacing))
    n_lat = max(1, math.ceil(params.width / spacing))
    s = -params.rear_extent + (np.arange(n_long) + 0.5) * params.length / n_long
    d = -params.width / 2 + (np.arange(n_lat) + 0.5) * params.width / n_lat
    ss, dd = np.meshgrid(s, d, indexing="ij")
    local = np.column_stack([ss.ravel(), dd.ravel()])
    return _to_world(local, state)


def _to_world(local: np.ndarray, state: VehicleState) -> np.ndarray:
    cos_p, sin_p = math.cos(state.psi), math.sin(state.psi)
    rotation = np.array([[cos_p, -sin_p], [sin_p, cos_p]])
    return local @ rotation.T + np.array([state.x, state.y])
