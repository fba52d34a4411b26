"""Constrained reference-tracking NMPC solved by sequential quadratic programming.

The problem is re-linearized around the incumbent trajectory and solved as a
dense convex QP a fixed number of times (full steps, no line search). QPs go
through the solver adapters, so the embedded ADMM solver, OSQP and Gurobi are
interchangeable.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .constraints import Advisor, BoxLimits, StageConstraints, build_stage_constraints
from .errors import QpBuildError
from .qp import QpSettings, QpStatus, QuadraticProgram
from .reference import ReferenceState
from .solver_adapters import create_solver_adapter
from .utils import get_logger, wrap_angle
from .vehicle import (
    N_INPUTS,
    N_STATES,
    ControlInput,
    LinearizedDynamics,
    VehicleParams,
    VehicleState,
    linearize,
    step,
)

logger = get_logger(__name__)

STAGE_SIZE = N_STATES + N_INPUTS


@dataclass(frozen=True, eq=False)
class Trajectory:
    """N + 1 stages of states and inputs; the terminal inputs are zero.

    Attributes:
        states: Array (N + 1, 4) of (x, y, ψ, v).
        inputs: Array (N + 1, 2) of (δ, a); the last row is zero.
    """

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=float)
        inputs = np.array(self.inputs, dtype=float)
        if states.ndim != 2 or states.shape[1] != N_STATES or len(states) < 2:
            raise ValueError(f"states must have shape (N + 1, 4), got {states.shape}")
        if inputs.shape != (len(states), N_INPUTS):
            raise ValueError(
                f"inputs must have shape ({len(states)}, 2), got {inputs.shape}"
            )
        if np.any(inputs[-1] != 0.0):
            raise ValueError("terminal inputs must be zero")
        if not (np.isfinite(states).all() and np.isfinite(inputs).all()):
            raise ValueError("trajectory contains non-finite values")
        states.setflags(write=False)
        inputs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(
            self.inputs, other.inputs
        )

    @property
    def horizon(self) -> int:
        """Number of stages N (the trajectory holds N + 1)."""
        return len(self.states) - 1

    def state(self, k: int) -> VehicleState:
        return VehicleState.from_array(self.states[k])

    def control(self, k: int) -> ControlInput:
        delta, a = self.inputs[k]
        return ControlInput(float(delta), float(a))

    def stage(self, k: int) -> tuple[VehicleState, ControlInput]:
        return self.state(k), self.control(k)

    @property
    def first_input(self) -> ControlInput:
        return self.control(0)

    def with_initial_state(self, state: VehicleState) -> "Trajectory":
        states = np.array(self.states)
        states[0] = state.as_array()
        return Trajectory(states, self.inputs)

    def dynamics_defect(self, params: VehicleParams) -> float:
        """Largest deviation of a stage from the nonlinear model's prediction."""
        return max(
            float(
                np.max(
                    np.abs(
                        step(self.state(k), self.control(k), params).as_array()
                        - self.states[k + 1]
                    )
                )
            )
            for k in range(self.horizon)
        )

    def to_dict(self) -> dict:
        return {"states": self.states.tolist(), "inputs": self.inputs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(np.asarray(data["states"]), np.asarray(data["inputs"]))


@dataclass(frozen=True, eq=False)
class Weights:
    """Tracking weights Q (4x4, PSD) on states and R (2x2, PD) on inputs."""

    Q: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.1, 1.0, 0.5]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.1]))

    def __post_init__(self) -> None:
        Q = np.array(self.Q, dtype=float)
        R = np.array(self.R, dtype=float)
        if Q.shape != (N_STATES, N_STATES) or R.shape != (N_INPUTS, N_INPUTS):
            raise ValueError(
                f"Q must be 4x4 and R 2x2, got {Q.shape} and {R.shape}"
            )
        for name, matrix in (("Q", Q), ("R", R)):
            if not np.allclose(matrix, matrix.T):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semi-definite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def from_diagonals(cls, q: Sequence[float], r: Sequence[float]) -> "Weights":
        return cls(
            np.diag(np.asarray(q, dtype=float)), np.diag(np.asarray(r, dtype=float))
        )


@dataclass(frozen=True)
class SqpSettings:
    iterations: int = 3
    qp_tolerance: float = 1e-6
    qp_max_iterations: int = 20000

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.qp_max_iterations < 1:
            raise ValueError("iteration counts must be positive")
        if not self.qp_tolerance > 0:
            raise ValueError(f"qp_tolerance must be positive, got {self.qp_tolerance}")

    def qp_settings(self) -> QpSettings:
        return QpSettings(
            tolerance=self.qp_tolerance, max_iterations=self.qp_max_iterations
        )


@dataclass(frozen=True)
class SolveInfo:
    """Telemetry of one NMPC solve.

    ``costs`` and ``defects`` hold one entry per completed SQP iteration: the
    tracking cost of the QP solution and its nonlinear dynamics defect.
    """

    status: QpStatus
    sqp_iterations: int = 0
    qp_iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    costs: tuple[float, ...] = ()
    defects: tuple[float, ...] = ()

    @property
    def cost(self) -> float:
        return self.costs[-1] if self.costs else float("nan")

    def to_dict(self) -> dict:
        return {
            "status": str(self.status),
            "sqp_iterations": self.sqp_iterations,
            "qp_iterations": self.qp_iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "costs": list(self.costs),
            "defects": list(self.defects),
        }


@dataclass(frozen=True)
class NmpcResult:
    """Outcome of one planning step.

    Attributes:
        trajectory: The candidate, or None when a QP was not solved.
        info: Solver telemetry.
        constraints: Stage constraints the candidate was solved against.
        warm_start: The trajectory linearized around in the first iteration.
    """

    trajectory: Trajectory | None
    info: SolveInfo
    constraints: list[StageConstraints | None]
    warm_start: Trajectory


def cold_start_trajectory(
    xi0: VehicleState, params: VehicleParams, limits: BoxLimits, n_stages: int
) -> Trajectory:
    """Straight braking plan from ξ⁰ that ends at rest if the limits allow.

    Applies δ = 0 and a = max(a_min, -v⁰ / (N T_s)) for N stages.
    """
    if n_stages < 1:
        raise ValueError(f"n_stages must be positive, got {n_stages}")
    braking = max(limits.a_min, -xi0.v / (n_stages * params.sample_time))
    control = ControlInput(0.0, braking)
    states = [xi0]
    for _ in range(n_stages):
        nxt = step(states[-1], control, params)
        states.append(VehicleState(nxt.x, nxt.y, nxt.psi, max(nxt.v, 0.0)))
    inputs = np.zeros((n_stages + 1, N_INPUTS))
    inputs[:-1] = control.as_array()
    return Trajectory(np.array([s.as_array() for s in states]), inputs)


def shift_trajectory(trajectory: Trajectory, steps: int = 1) -> Trajectory:
    """Drop the first ``steps`` stages and repeat the terminal rest stage."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    steps = min(steps, trajectory.horizon)
    n = len(trajectory.states)
    states = np.vstack(
        [trajectory.states[steps:], np.repeat(trajectory.states[-1:], steps, axis=0)]
    )
    inputs = np.vstack([trajectory.inputs[steps:], np.zeros((steps, N_INPUTS))])
    return Trajectory(states[:n], inputs[:n])


def _state_index(k: int) -> int:
    return STAGE_SIZE * k


def _input_index(k: int) -> int:
    return STAGE_SIZE * k + N_STATES


def build_qp(
    linearizations: Sequence[LinearizedDynamics],
    refs: Sequence[ReferenceState],
    constraints: Sequence[StageConstraints | None],
    limits: BoxLimits,
    weights: Weights,
    xi0: VehicleState,
) -> QuadraticProgram:
    """Stack the tracking problem over the horizon into one dense QP.

    Decision vector z = [ξ⁰, u⁰, ξ¹, u¹, ..., ξ^{N-1}, u^{N-1}, ξ^N]; the
    terminal inputs are eliminated because they are fixed to zero.

    Cost:        Σ_{k=0..N} ‖ξ^k - ξ_ref^k‖²_Q + Σ_{k=0..N-1} ‖u^k‖²_R
    Equalities:  ξ⁰ fixed, ξ^{k+1} = A_k ξ^k + B_k u^k + c_k, v^N = 0
    Inequalities:
        v_min <= v^k <= v_max                   k = 1..N
        δ_min <= δ^k <= δ_max, a_min <= a^k <= a_max   k = 0..N-1
        |ψ^{k+1} - ψ^k| <= Δψ_max               k = 0..N-1
        n · (x^k, y^k) <= offset                k = 1..N, every stage half-space

    Raises:
        QpBuildError: If the numbers of linearizations, references and stage
            constraints do not fit one horizon.
    """
    n_stages = len(linearizations)
    if n_stages < 1:
        raise QpBuildError("at least one linearization is required")
    if len(refs) != n_stages + 1 or len(constraints) != n_stages + 1:
        raise QpBuildError(
            f"{n_stages} linearizations need {n_stages + 1} references and stage "
            f"constraints, got {len(refs)} and {len(constraints)}"
        )
    n = STAGE_SIZE * n_stages + N_STATES

    # ============================================================================
    # OBJECTIVE FUNCTION
    # ============================================================================

    P = np.zeros((n, n))
    q = np.zeros(n)
    constant = 0.0
    for k, ref in enumerate(refs):
        sx = slice(_state_index(k), _state_index(k) + N_STATES)
        r = ref.as_array()
        P[sx, sx] = 2 * weights.Q
        q[sx] = -2 * weights.Q @ r
        constant += float(r @ weights.Q @ r)
    for k in range(n_stages):
        su = slice(_input_index(k), _input_index(k) + N_INPUTS)
        P[su, su] = 2 * weights.R

    # ============================================================================
    # EQUALITY CONSTRAINTS
    # ============================================================================

    A_eq = np.zeros((N_STATES * (n_stages + 1) + 1, n))
    b_eq = np.zeros(len(A_eq))
    A_eq[:N_STATES, :N_STATES] = np.eye(N_STATES)
    b_eq[:N_STATES] = xi0.as_array()
    for k, lin in enumerate(linearizations):
        if lin.A.shape != (N_STATES, N_STATES) or lin.B.shape != (N_STATES, N_INPUTS):
            raise QpBuildError(f"linearization {k} has wrong dimensions")
        block = slice(N_STATES * (k + 1), N_STATES * (k + 2))
        A_eq[block, _state_index(k + 1) : _state_index(k + 1) + N_STATES] = np.eye(
            N_STATES
        )
        A_eq[block, _state_index(k) : _state_index(k) + N_STATES] = -lin.A
        A_eq[block, _input_index(k) : _input_index(k) + N_INPUTS] = -lin.B
        b_eq[block] = lin.c
    # full stop at the end of the horizon
    A_eq[-1, _state_index(n_stages) + 3] = 1.0

    # ============================================================================
    # INEQUALITY CONSTRAINTS
    # ============================================================================

    ineq_rows: list[np.ndarray] = []
    bounds: list[float] = []

    def add(entries: dict[int, float], bound: float) -> None:
        row = np.zeros(n)
        for index, value in entries.items():
            row[index] = value
        ineq_rows.append(row)
        bounds.append(bound)

    for k in range(1, n_stages + 1):
        v = _state_index(k) + 3
        add({v: 1.0}, limits.v_max)
        add({v: -1.0}, -limits.v_min)
    for k in range(n_stages):
        delta, a = _input_index(k), _input_index(k) + 1
        add({delta: 1.0}, limits.delta_max)
        add({delta: -1.0}, -limits.delta_min)
        add({a: 1.0}, limits.a_max)
        add({a: -1.0}, -limits.a_min)
        psi, psi_next = _state_index(k) + 2, _state_index(k + 1) + 2
        add({psi_next: 1.0, psi: -1.0}, limits.heading_rate)
        add({psi_next: -1.0, psi: 1.0}, limits.heading_rate)
    for k in range(1, n_stages + 1):
        stage = constraints[k]
        if stage is None:
            continue
        x = _state_index(k)
        for halfspace in stage.halfspaces():
            add({x: halfspace.normal[0], x + 1: halfspace.normal[1]}, halfspace.offset)

    return QuadraticProgram(
        P=P,
        q=q,
        A_eq=A_eq,
        b_eq=b_eq,
        A_ineq=np.array(ineq_rows),
        b_ineq=np.array(bounds),
        constant=constant,
    )


def _unwrap_references(
    refs: Sequence[ReferenceState], incumbent: Trajectory
) -> list[ReferenceState]:
    """Shift reference headings by multiples of 2π towards the incumbent's."""
    unwrapped = []
    for k, ref in enumerate(refs):
        psi = incumbent.states[k, 2]
        unwrapped.append(
            ReferenceState(ref.x, ref.y, psi + wrap_angle(ref.h - psi), ref.v)
        )
    return unwrapped


class NmpcController:
    """SQP controller tracking a reference under half-space and box constraints.

    Algorithm per call:

        incumbent = warm start (shifted accepted plan) or braking plan
        constraints = query the advisor along the incumbent
        repeat `iterations` times:
            linearize the bicycle model around every incumbent stage
            build and solve the QP
            incumbent = QP solution
        return incumbent, first-stage inputs are the ones to actuate

    A QP that is infeasible or hits its iteration cap ends the call without a
    trajectory; the observer's fallback takes over.
    """

    def __init__(
        self,
        params: VehicleParams,
        limits: BoxLimits | None = None,
        weights: Weights | None = None,
        settings: SqpSettings | None = None,
        solver: str = "admm",
        buffer: float = 0.0,
        margin: float = 0.0,
    ) -> None:
        """Initialize the controller.

        Args:
            params: Vehicle geometry and sample time.
            limits: Box limits; BoxLimits() by default.
            weights: Tracking weights; Weights() by default.
            settings: SQP iteration count and QP tolerances.
            solver: QP backend name, see create_solver_adapter.
            buffer: Distance kept from potential pedestrian cells (m).
            margin: Lateral clearance subtracted from measured distances (m).

        Raises:
            ValueError: If solver is not a known backend or buffer/margin is
                negative.
            ImportError: If the requested backend is not installed.
        """
        if buffer < 0 or margin < 0:
            raise ValueError(
                f"buffer and margin must be non-negative, got {buffer} and {margin}"
            )
        self.params = params
        self.limits = limits or BoxLimits()
        self.weights = weights or Weights()
        self.settings = settings or SqpSettings()
        self.buffer = buffer
        self.margin = margin
        self._solver = create_solver_adapter(solver)

    def initial_guess(
        self, xi0: VehicleState, warm_start: Trajectory | None, n_stages: int
    ) -> Trajectory:
        """Warm start pinned to ξ⁰, or the braking plan without one."""
        if warm_start is None or warm_start.horizon != n_stages:
            return cold_start_trajectory(xi0, self.params, self.limits, n_stages)
        return warm_start.with_initial_state(xi0)

    def plan(
        self,
        xi0: VehicleState,
        warm_start: Trajectory | None,
        refs: Sequence[ReferenceState],
        advisor: Advisor,
    ) -> NmpcResult:
        """One receding-horizon step: constraints from the advisor, then SQP.

        Args:
            xi0: Measured state.
            warm_start: The accepted plan shifted to the current tick, or None.
            refs: N + 1 stage references.
            advisor: Boundary service of the monitor.
        """
        incumbent = self.initial_guess(xi0, warm_start, len(refs) - 1)
        constraints = build_stage_constraints(
            incumbent.states, refs, advisor, self.buffer, self.margin
        )
        trajectory, info = self.solve(xi0, incumbent, refs, constraints)
        return NmpcResult(trajectory, info, constraints, incumbent)

    def solve(
        self,
        xi0: VehicleState,
        incumbent: Trajectory,
        refs: Sequence[ReferenceState],
        constraints: Sequence[StageConstraints | None],
    ) -> tuple[Trajectory | None, SolveInfo]:
        """Run the SQP iterations from a given incumbent.

        Returns:
            The final trajectory (None unless every QP was solved) and the
            telemetry.
        """
        n_stages = incumbent.horizon
        refs = _unwrap_references(refs, incumbent)
        qp_settings = self.settings.qp_settings()
        costs: list[float] = []
        defects: list[float] = []
        qp_iterations = 0
        result = None

        for iteration in range(1, self.settings.iterations + 1):
            linearizations = [
                linearize(incumbent.state(k), incumbent.control(k), self.params)
                for k in range(n_stages)
            ]
            qp = build_qp(
                linearizations, refs, constraints, self.limits, self.weights, xi0
            )
            result = self._solver.solve(qp, qp_settings)
            qp_iterations += result.iterations
            if not result.solved:
                return None, SolveInfo(
                    status=result.status,
                    sqp_iterations=iteration,
                    qp_iterations=qp_iterations,
                    costs=tuple(costs),
                    defects=tuple(defects),
                )
            incumbent = self._trajectory_from_solution(result.x, n_stages)
            costs.append(result.objective)
            defects.append(incumbent.dynamics_defect(self.params))
            logger.debug(
                "SQP iteration %d: cost %.6g, defect %.3g, %d QP iterations",
                iteration,
                costs[-1],
                defects[-1],
                result.iterations,
            )

        return incumbent, SolveInfo(
            status=QpStatus.SOLVED,
            sqp_iterations=self.settings.iterations,
            qp_iterations=qp_iterations,
            primal_residual=result.primal_residual,
            dual_residual=result.dual_residual,
            costs=tuple(costs),
            defects=tuple(defects),
        )

    # ============================================================================
    # HELPER METHODS
    # ============================================================================

    @staticmethod
    def _trajectory_from_solution(z: np.ndarray, n_stages: int) -> Trajectory:
        """Unstack the decision vector into states and inputs."""
        states = np.array(
            [
                z[_state_index(k) : _state_index(k) + N_STATES]
                for k in range(n_stages + 1)
            ]
        )
        inputs = np.zeros((n_stages + 1, N_INPUTS))
        for k in range(n_stages):
            inputs[k] = z[_input_index(k) : _input_index(k) + N_INPUTS]
        return Trajectory(states, inputs)


def solve_nmpc(
    xi0: VehicleState,
    previous: Trajectory | None,
    refs: Sequence[ReferenceState],
    advisor: Advisor,
    params: VehicleParams,
    weights: Weights | None = None,
    settings: SqpSettings | None = None,
    limits: BoxLimits | None = None,
    solver: str = "admm",
    buffer: float = 0.0,
    margin: float = 0.0,
) -> NmpcResult:
    """Functional wrapper around NmpcController.plan."""
    controller = NmpcController(
        params,
        limits=limits,
        weights=weights,
        settings=settings,
        solver=solver,
        buffer=buffer,
        margin=margin,
    )
    return controller.plan(xi0, previous, refs, advisor)
