"""Solver adapters for the NMPC quadratic programs.

Provides a unified interface for different QP solvers (embedded ADMM, OSQP,
Gurobi).
"""

import numpy as np

from .qp import QpResult, QpSettings, QpStatus, QuadraticProgram, solve_qp
from .utils import get_logger

logger = get_logger(__name__)


class SolverAdapter:
    """Base adapter interface for QP solvers."""

    name = "base"

    def solve(self, qp: QuadraticProgram, settings: QpSettings) -> QpResult:
        """Solve the quadratic program.

        Args:
            qp: The quadratic program.
            settings: Tolerance and iteration cap to pass on to the backend.

        Returns:
            QpResult with a status; infeasibility is a status, not an error.
        """
        raise NotImplementedError

    def _check_status(self, result: QpResult) -> QpResult:
        """Log non-solved statuses."""
        if result.status == QpStatus.SOLVED:
            logger.debug(
                "Solver status: solved (%s, %d iterations)",
                self.name,
                result.iterations,
            )
        elif result.status == QpStatus.INFEASIBLE:
            logger.warning(
                "QP is infeasible. Check constraint compatibility: half-space "
                "offsets, terminal stop and acceleration limits."
            )
        else:
            logger.warning(
                "QP solver %s stopped at the iteration limit after %d iterations",
                self.name,
                result.iterations,
            )
        return result


class AdmmAdapter(SolverAdapter):
    """Adapter for the embedded ADMM solver (numpy/scipy only)."""

    name = "admm"

    def solve(self, qp: QuadraticProgram, settings: QpSettings) -> QpResult:
        """Solve with safenav.qp.solve_qp."""
        return self._check_status(solve_qp(qp, settings))


class OsqpAdapter(SolverAdapter):
    """Adapter for the OSQP solver."""

    name = "osqp"

    def solve(self, qp: QuadraticProgram, settings: QpSettings) -> QpResult:
        """Solve with OSQP on the stacked constraints l <= A z <= u."""
        import osqp
        from scipy import sparse

        A, lower, upper = qp.stacked()
        problem = osqp.OSQP()
        problem.setup(
            P=sparse.triu(qp.P, format="csc"),
            q=qp.q,
            A=sparse.csc_matrix(A),
            l=lower,
            u=upper,
            eps_abs=settings.tolerance,
            eps_rel=0.0,
            max_iter=settings.max_iterations,
            verbose=False,
        )
        raw = problem.solve()
        status = str(raw.info.status).lower()
        if status == "solved":
            x = np.asarray(raw.x, dtype=float)
            result = QpResult(
                QpStatus.SOLVED,
                x=x,
                y=np.asarray(raw.y, dtype=float),
                iterations=int(raw.info.iter),
                primal_residual=float(raw.info.pri_res),
                dual_residual=float(raw.info.dua_res),
                objective=qp.objective(x),
            )
        elif "primal infeasible" in status:
            result = QpResult(QpStatus.INFEASIBLE, iterations=int(raw.info.iter))
        else:
            logger.debug("OSQP status: %s", status)
            result = QpResult(QpStatus.ITERATION_LIMIT, iterations=int(raw.info.iter))
        return self._check_status(result)


class GurobiAdapter(SolverAdapter):
    """Adapter for Gurobi solver."""

    name = "gurobi"

    def solve(self, qp: QuadraticProgram, settings: QpSettings) -> QpResult:
        """Solve with Gurobi's barrier method via the matrix API."""
        import gurobipy as gp
        from gurobipy import GRB

        model = gp.Model("safenav_qp")
        model.setParam("OutputFlag", 0)  # Silent mode
        model.setParam("BarConvTol", settings.tolerance)
        model.setParam("FeasibilityTol", max(settings.tolerance, 1e-9))
        model.setParam("OptimalityTol", max(settings.tolerance, 1e-9))
        z = model.addMVar(qp.n_variables, lb=-GRB.INFINITY, name="z")
        model.setObjective(0.5 * z @ qp.P @ z + qp.q @ z + qp.constant, GRB.MINIMIZE)
        if len(qp.b_eq):
            model.addConstr(qp.A_eq @ z == qp.b_eq, name="eq")
        finite = np.isfinite(qp.b_ineq)
        if finite.any():
            model.addConstr(qp.A_ineq[finite] @ z <= qp.b_ineq[finite], name="ineq")
        model.optimize()

        iterations = int(model.BarIterCount)
        if model.Status == GRB.OPTIMAL:
            x = np.asarray(z.X, dtype=float)
            result = QpResult(
                QpStatus.SOLVED, x=x, iterations=iterations, objective=qp.objective(x)
            )
        elif model.Status in (GRB.INFEASIBLE, GRB.INF_OR_UNBD):
            result = QpResult(QpStatus.INFEASIBLE, iterations=iterations)
        else:
            logger.debug("Gurobi status: %s", model.Status)
            result = QpResult(QpStatus.ITERATION_LIMIT, iterations=iterations)
        return self._check_status(result)


def create_solver_adapter(solver: str) -> SolverAdapter:
    """Factory function to create the appropriate solver adapter.

    Args:
        solver: Solver name ('auto', 'admm', 'osqp' or 'gurobi').

    Returns:
        SolverAdapter instance.

    Raises:
        ValueError: If solver name is invalid.
        ImportError: If requested solver is not available.
    """
    if solver == "auto":
        try:
            import gurobipy  # noqa: F401

            logger.debug("Using Gurobi solver backend")
            return GurobiAdapter()
        except ImportError:
            pass
        try:
            import osqp  # noqa: F401

            logger.debug("Gurobi not available, using OSQP")
            return OsqpAdapter()
        except ImportError:
            logger.debug("Gurobi and OSQP not available, falling back to ADMM")
            return AdmmAdapter()
    elif solver == "admm":
        logger.debug("Using embedded ADMM solver backend")
        return AdmmAdapter()
    elif solver == "osqp":
        import osqp  # noqa: F401

        logger.debug("Using OSQP solver backend")
        return OsqpAdapter()
    elif solver == "gurobi":
        import gurobipy  # noqa: F401

        logger.debug("Using Gurobi solver backend")
        return GurobiAdapter()
    else:
        raise ValueError(
            f"Unknown solver: {solver}. Use 'auto', 'admm', 'osqp' or 'gurobi'"
        )
