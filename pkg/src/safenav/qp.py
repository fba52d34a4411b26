"""Dense convex quadratic programs and an embedded operator-splitting solver.

Problems have the form

    minimize    ½ zᵀ P z + qᵀ z + constant
    subject to  A_eq z = b_eq,  A_ineq z <= b_ineq

and are solved with ADMM on the stacked constraints l <= A z <= u. Equality
rows get a larger step size, the step size adapts to the residual balance, and
once the active set settles a polishing step solves the reduced KKT system
directly, which usually lands on the exact solution long before the iteration
cap.
"""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy import linalg

from .errors import QpBuildError
from .utils import get_logger

logger = get_logger(__name__)

PSD_TOLERANCE = 1e-10


class QpStatus(StrEnum):
    SOLVED = "solved"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """Convex QP with equality and upper-bounded inequality constraints."""

    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    constant: float = 0.0

    def __post_init__(self) -> None:
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise QpBuildError(f"Hessian must be square, got shape {P.shape}")
        q = np.asarray(self.q, dtype=float).reshape(-1)
        if q.shape != (n,):
            raise QpBuildError(f"gradient has {q.size} entries, expected {n}")
        A_eq, b_eq = _constraint_block(self.A_eq, self.b_eq, n, "equality")
        A_ineq, b_ineq = _constraint_block(self.A_ineq, self.b_ineq, n, "inequality")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-12):
            raise QpBuildError("Hessian is not symmetric")
        if n and np.linalg.eigvalsh(P).min() < -PSD_TOLERANCE:
            raise QpBuildError("Hessian is not positive semi-definite")
        for name, value in (("P", P), ("q", q), ("A_eq", A_eq), ("b_eq", b_eq),
                            ("A_ineq", A_ineq)):
            if not np.isfinite(value).all():
                raise QpBuildError(f"{name} contains non-finite values")
        if np.isnan(b_ineq).any():
            raise QpBuildError("b_ineq contains NaN")
        for name, value in (("P", P), ("q", q), ("A_eq", A_eq), ("b_eq", b_eq),
                            ("A_ineq", A_ineq), ("b_ineq", b_ineq)):
            object.__setattr__(self, name, value)

    @property
    def n_variables(self) -> int:
        return self.P.shape[0]

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All constraints as l <= A z <= u, equalities first."""
        A = np.vstack([self.A_eq, self.A_ineq])
        lower = np.concatenate([self.b_eq, np.full(len(self.b_ineq), -np.inf)])
        upper = np.concatenate([self.b_eq, self.b_ineq])
        return A, lower, upper

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z + self.constant)


def _constraint_block(
    matrix: np.ndarray, values: np.ndarray, n: int, kind: str
) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float).reshape(-1)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0 and values.size == 0:
        return np.zeros((0, n)), values
    if matrix.ndim != 2 or matrix.shape != (len(values), n):
        raise QpBuildError(
            f"{kind} matrix has shape {matrix.shape}, expected ({len(values)}, {n})"
        )
    return matrix, values


@dataclass(frozen=True)
class QpSettings:
    """Solver settings.

    Attributes:
        tolerance: Absolute bound on primal and dual residuals.
        max_iterations: ADMM iteration cap.
        rho: Initial step size for inequality rows.
        sigma: Regularization of the x-update.
        alpha: Over-relaxation factor in (0, 2).
        check_interval: Iterations between step-size updates and polishing
            attempts.
        infeasibility_tolerance: Threshold of the primal infeasibility
            certificate.
        polish: Whether to attempt the active-set polishing step.
    """

    tolerance: float = 1e-6
    max_iterations: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    check_interval: int = 25
    infeasibility_tolerance: float = 1e-5
    polish: bool = True

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(
                f"max_iterations must be positive, got {self.max_iterations}"
            )
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.rho <= 0 or self.sigma <= 0 or self.check_interval < 1:
            raise ValueError("rho, sigma and check_interval must be positive")


@dataclass(frozen=True, eq=False)
class QpResult:
    """Solver outcome; ``x`` and ``y`` are None unless the status is SOLVED."""

    status: QpStatus
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    objective: float = float("nan")
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status == QpStatus.SOLVED


_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_SCALE = 1e3
_KKT_REGULARIZATION = 1e-9
_REFINEMENT_STEPS = 5


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _residuals(
    qp: QuadraticProgram, A: np.ndarray, x: np.ndarray, z: np.ndarray, y: np.ndarray
) -> tuple[float, float]:
    primal = _inf_norm(A @ x - z)
    dual = _inf_norm(qp.P @ x + qp.q + A.T @ y)
    return primal, dual


def _step_sizes(lower: np.ndarray, upper: np.ndarray, rho: float) -> np.ndarray:
    rho_vec = np.full(len(lower), rho)
    rho_vec[lower == upper] = min(_RHO_EQ_SCALE * rho, _RHO_MAX)
    rho_vec[np.isinf(lower) & np.isinf(upper)] = _RHO_MIN
    return rho_vec


def _factor(
    qp: QuadraticProgram, A: np.ndarray, rho_vec: np.ndarray, sigma: float
) -> tuple:
    n = qp.n_variables
    M = qp.P + sigma * np.eye(n) + A.T @ (rho_vec[:, None] * A)
    return linalg.cho_factor(M)


def _polish(
    qp: QuadraticProgram,
    A: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    z: np.ndarray,
    y: np.ndarray,
    tol: float,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Solve the KKT system on the guessed active set.

    Returns the polished (x, y) if it satisfies the KKT conditions within
    ``tol``, otherwise None.
    """
    n = qp.n_variables
    equality = lower == upper
    at_lower = equality | (z - lower < -y)
    at_upper = ~equality & (upper - z < y)
    active = np.flatnonzero(at_lower | at_upper)
    rhs_bound = np.where(at_upper, upper, lower)[active]
    A_act = A[active]
    m = len(active)

    kkt = np.block([[qp.P, A_act.T], [A_act, np.zeros((m, m))]])
    shift = np.concatenate(
        [np.full(n, _KKT_REGULARIZATION), np.full(m, -_KKT_REGULARIZATION)]
    )
    rhs = np.concatenate([-qp.q, rhs_bound])
    try:
        lu = linalg.lu_factor(kkt + np.diag(shift))
    except (linalg.LinAlgError, ValueError):
        return None
    solution = linalg.lu_solve(lu, rhs)
    for _ in range(_REFINEMENT_STEPS):
        solution = solution + linalg.lu_solve(lu, rhs - kkt @ solution)
    if not np.isfinite(solution).all():
        return None

    x = solution[:n]
    y_polished = np.zeros(len(lower))
    y_polished[active] = solution[n:]
    Ax = A @ x
    primal = _inf_norm(Ax - np.clip(Ax, lower, upper))
    dual = _inf_norm(qp.P @ x + qp.q + A.T @ y_polished)
    signs_ok = np.all(y_polished[at_upper] >= -tol) and np.all(
        y_polished[at_lower & ~equality] <= tol
    )
    if primal <= tol and dual <= tol and signs_ok:
        return x, y_polished
    return None


def _primal_infeasible(
    delta_y: np.ndarray, A: np.ndarray, lower: np.ndarray, upper: np.ndarray, eps: float
) -> bool:
    norm = _inf_norm(delta_y)
    if norm == 0.0:
        return False
    positive = np.maximum(delta_y, 0.0)
    negative = np.minimum(delta_y, 0.0)
    # an infinite bound paired with a non-zero component rules out a certificate
    if np.any(np.isinf(upper) & (positive > eps * norm)) or np.any(
        np.isinf(lower) & (negative < -eps * norm)
    ):
        return False
    support = np.sum(np.where(np.isfinite(upper), upper, 0.0) * positive) + np.sum(
        np.where(np.isfinite(lower), lower, 0.0) * negative
    )
    return _inf_norm(A.T @ delta_y) <= eps * norm and support <= -eps * norm


def solve_qp(qp: QuadraticProgram, settings: QpSettings | None = None) -> QpResult:
    """Solve a convex QP with the embedded ADMM solver.

    The result is deterministic for given inputs and settings.

    Returns:
        SOLVED with primal and dual residuals <= ``settings.tolerance``,
        INFEASIBLE when a primal infeasibility certificate is found, or
        ITERATION_LIMIT.
    """
    settings = settings or QpSettings()
    tol = settings.tolerance
    A, lower, upper = qp.stacked()
    n, m = qp.n_variables, len(lower)

    rho = settings.rho
    rho_vec = _step_sizes(lower, upper, rho)
    factor = _factor(qp, A, rho_vec, settings.sigma)

    x = np.zeros(n)
    z = np.clip(np.zeros(m), lower, upper)
    y = np.zeros(m)
    alpha = settings.alpha
    primal = dual = float("inf")

    for iteration in range(1, settings.max_iterations + 1):
        rhs = settings.sigma * x - qp.q + A.T @ (rho_vec * z - y)
        x_tilde = linalg.cho_solve(factor, rhs)
        z_tilde = A @ x_tilde
        x = alpha * x_tilde + (1 - alpha) * x
        z_relaxed = alpha * z_tilde + (1 - alpha) * z
        z_next = np.clip(z_relaxed + y / rho_vec, lower, upper)
        y_next = y + rho_vec * (z_relaxed - z_next)
        delta_y = y_next - y
        z, y = z_next, y_next

        primal, dual = _residuals(qp, A, x, z, y)
        if primal <= tol and dual <= tol:
            break

        if iteration % settings.check_interval == 0:
            if _inf_norm(delta_y) > tol and _primal_infeasible(
                delta_y, A, lower, upper, settings.infeasibility_tolerance
            ):
                logger.debug("QP primal infeasible after %d iterations", iteration)
                return QpResult(QpStatus.INFEASIBLE, iterations=iteration)
            if settings.polish:
                polished = _polish(qp, A, lower, upper, z, y, tol)
                if polished is not None:
                    return _solved(qp, A, lower, upper, *polished, iteration, True)
            rho = _adapt_rho(qp, A, x, z, y, rho, primal, dual)
            new_vec = _step_sizes(lower, upper, rho)
            if not np.array_equal(new_vec, rho_vec):
                rho_vec = new_vec
                factor = _factor(qp, A, rho_vec, settings.sigma)
    else:
        logger.debug(
            "QP hit the iteration cap (primal %.2e, dual %.2e)", primal, dual
        )
        return QpResult(
            QpStatus.ITERATION_LIMIT,
            iterations=settings.max_iterations,
            primal_residual=primal,
            dual_residual=dual,
        )

    if settings.polish:
        polished = _polish(qp, A, lower, upper, z, y, tol)
        if polished is not None:
            return _solved(qp, A, lower, upper, *polished, iteration, True)
    return QpResult(
        QpStatus.SOLVED,
        x=x,
        y=y,
        iterations=iteration,
        primal_residual=primal,
        dual_residual=dual,
        objective=qp.objective(x),
    )


def _solved(
    qp: QuadraticProgram,
    A: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    iterations: int,
    polished: bool,
) -> QpResult:
    Ax = A @ x
    return QpResult(
        QpStatus.SOLVED,
        x=x,
        y=y,
        iterations=iterations,
        primal_residual=_inf_norm(Ax - np.clip(Ax, lower, upper)),
        dual_residual=_inf_norm(qp.P @ x + qp.q + A.T @ y),
        objective=qp.objective(x),
        polished=polished,
    )


def _adapt_rho(
    qp: QuadraticProgram,
    A: np.ndarray,
    x: np.ndarray,
    z: np.ndarray,
    y: np.ndarray,
    rho: float,
    primal: float,
    dual: float,
) -> float:
    """Balance primal and dual residuals relative to their magnitudes."""
    primal_scale = max(_inf_norm(A @ x), _inf_norm(z), 1e-12)
    dual_scale = max(_inf_norm(qp.P @ x), _inf_norm(A.T @ y), _inf_norm(qp.q), 1e-12)
    ratio = (primal / primal_scale) / max(dual / dual_scale, 1e-12)
    candidate = float(np.clip(rho * np.sqrt(ratio), _RHO_MIN, _RHO_MAX))
    if candidate > 5 * rho or candidate < rho / 5:
        return candidate
    return rho


def kkt_residuals(
    qp: QuadraticProgram, x: np.ndarray, y: np.ndarray
) -> dict[str, float]:
    """Primal, dual and complementarity residuals of a candidate solution.

    ``y`` holds the multipliers of the stacked constraints (equalities first),
    positive at active upper bounds and negative at active lower bounds.
    """
    A, lower, upper = qp.stacked()
    Ax = A @ x
    n_eq = len(qp.b_eq)
    y_ineq = y[n_eq:]
    slack = upper[n_eq:] - Ax[n_eq:]
    return {
        "primal": _inf_norm(Ax - np.clip(Ax, lower, upper)),
        "dual": _inf_norm(qp.P @ x + qp.q + A.T @ y),
        "dual_sign": _inf_norm(np.minimum(y_ineq, 0.0)),
        "complementarity": _inf_norm(y_ineq * slack),
    }
