"""Augmented-Lagrangian solver for box-constrained nonlinear programs.

Each outer iteration minimizes

    f(z) + lam . c(z) + rho/2 |c(z)|^2 + 1/(2 rho) sum(max(0, mu + rho g(z))^2 - mu^2)

over the box with SciPy's L-BFGS-B, then updates the multipliers and, when
the constraint violation has not shrunk fourfold, grows the penalty ``rho``.
Equality multipliers are also re-estimated by least squares on the free
variables; whichever estimate leaves the smaller stationarity is kept.
The solver only touches a problem through its evaluation callbacks.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, minimize
from scipy.sparse.linalg import lsqr

from quadplan.services.nlp_problem import NlpProblem

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

PENALTY_CEILING = 1e12
LSQ_TOL = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    eq_tol: float = 1e-6
    ineq_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    step_tol: float = 1e-7
    stall_tol: float = 1e-12
    memory: int = 10

    def validate(self) -> None:
        for name in ("eq_tol", "ineq_tol", "step_tol", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver.{name} must be positive")
        if not self.stall_tol >= 0:
            raise ValueError("solver.stall_tol must be non-negative")
        if not self.penalty_growth > 1:
            raise ValueError("solver.penalty_growth must exceed 1")
        for name in ("max_outer", "max_inner", "memory"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"solver.{name} must be at least 1")


@dataclass(frozen=True)
class Multipliers:
    eq: np.ndarray
    ineq: np.ndarray


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    eq_violation: float
    ineq_violation: float
    complementarity: float
    iterations: int = 0

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "eq_violation": self.eq_violation,
            "ineq_violation": self.ineq_violation,
            "complementarity": self.complementarity,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class IterationRecord:
    outer: int
    objective: float
    eq_violation: float
    ineq_violation: float
    penalty: float
    inner_iterations: int
    accepted: bool


@dataclass
class SolveResult:
    """Solver outcome; the planner attaches the node trajectory and energy."""

    x: np.ndarray
    objective: float
    status: str
    kkt: KktReport
    multipliers: Multipliers
    history: List[IterationRecord] = field(default_factory=list)
    trajectory: Optional[object] = None
    max_defect: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _violations(c: np.ndarray, g: np.ndarray):
    eq = float(np.max(np.abs(c))) if c.size else 0.0
    ineq = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
    return eq, ineq


def kkt_check(problem: NlpProblem, z, multipliers: Multipliers, iterations: int = 0) -> KktReport:
    """First-order optimality measures at ``z`` for given multipliers.

    Stationarity is the infinity norm of the projected Lagrangian gradient step
    ``z - P(z - grad L)``, so active bounds do not count against it.
    """
    z = np.asarray(z, dtype=float)
    c = problem.eq(z)
    g = problem.ineq(z)
    grad = problem.gradient(z)
    if c.size:
        grad = grad + problem.eq_jac(z).T @ multipliers.eq
    if g.size:
        grad = grad + problem.ineq_jac(z).T @ multipliers.ineq
    projected = z - problem.project(z - grad)
    eq_violation, ineq_violation = _violations(c, g)
    complementarity = float(np.max(np.abs(multipliers.ineq * g))) if g.size else 0.0
    return KktReport(
        stationarity=float(np.max(np.abs(projected))) if z.size else 0.0,
        eq_violation=eq_violation,
        ineq_violation=ineq_violation,
        complementarity=complementarity,
        iterations=iterations,
    )


def least_squares_multipliers(problem: NlpProblem, z, ineq_mult) -> Multipliers:
    """Equality multipliers minimizing the Lagrangian gradient over free variables.

    Variables at a bound are left out, so bound multipliers absorb them.
    """
    z = np.asarray(z, dtype=float)
    ineq_mult = np.array(ineq_mult, dtype=float)
    lam = np.zeros(problem.n_eq)
    free = np.flatnonzero((z > problem.lower) & (z < problem.upper))
    if not problem.n_eq or not free.size:
        return Multipliers(lam, ineq_mult)
    grad = problem.gradient(z)
    if problem.n_ineq:
        grad = grad + problem.ineq_jac(z).T @ ineq_mult
    J = problem.eq_jac(z)
    J_free = J.tocsc()[:, free] if sparse.issparse(J) else np.asarray(J)[:, free]
    lam = lsqr(J_free.T, -grad[free], atol=LSQ_TOL, btol=LSQ_TOL,
               iter_lim=4 * problem.n_eq)[0]
    return Multipliers(lam, ineq_mult)


class AugmentedLagrangian:
    """Penalty/multiplier state and the merit function of one solve."""

    def __init__(self, problem: NlpProblem, penalty: float):
        self.problem = problem
        self.lam = np.zeros(problem.n_eq)
        self.mu = np.zeros(problem.n_ineq)
        self.rho = penalty

    def merit(self, z):
        p = self.problem
        value = p.value(z)
        grad = p.gradient(z)
        if p.n_eq:
            c = p.eq(z)
            shifted = self.lam + self.rho * c
            value += self.lam @ c + 0.5 * self.rho * (c @ c)
            grad = grad + p.eq_jac(z).T @ shifted
        if p.n_ineq:
            g = p.ineq(z)
            shifted = np.maximum(self.mu + self.rho * g, 0.0)
            value += (shifted @ shifted - self.mu @ self.mu) / (2.0 * self.rho)
            grad = grad + p.ineq_jac(z).T @ shifted
        return value, grad

    def update_multipliers(self, c, g) -> None:
        if c.size:
            self.lam = self.lam + self.rho * c
        if g.size:
            self.mu = np.maximum(self.mu + self.rho * g, 0.0)

    @property
    def multipliers(self) -> Multipliers:
        return Multipliers(self.lam.copy(), self.mu.copy())


def solve(problem: NlpProblem, z0, settings: Optional[SolverSettings] = None) -> SolveResult:
    """Minimize ``problem`` from ``z0`` (projected onto the box).

    Returns the best iterate seen: the one with the smallest constraint
    violation, ties within tolerance broken by objective value.
    """
    settings = settings or SolverSettings()
    settings.validate()
    z = problem.project(z0)
    al = AugmentedLagrangian(problem, settings.penalty_init)
    bounds = Bounds(problem.lower, problem.upper)
    options = {
        "maxiter": settings.max_inner,
        "maxcor": settings.memory,
        "gtol": settings.step_tol,
        "ftol": settings.stall_tol,
    }

    c, g = problem.eq(z), problem.ineq(z)
    prev_violation = max(_violations(c, g))
    best = None
    history = []
    status = MAX_ITER
    total_inner = 0

    start = least_squares_multipliers(problem, z, al.mu)
    kkt = kkt_check(problem, z, start)
    eq_violation, ineq_violation = _violations(c, g)
    if (eq_violation <= settings.eq_tol and ineq_violation <= settings.ineq_tol
            and kkt.stationarity <= 10.0 * settings.eq_tol):
        objective = problem.value(z)
        logger.info("start point already optimal: f=%.8e", objective)
        history.append(IterationRecord(0, objective, eq_violation, ineq_violation,
                                       al.rho, 0, True))
        return SolveResult(x=z, objective=objective, status=CONVERGED, kkt=kkt,
                           multipliers=start, history=history)

    for outer in range(1, settings.max_outer + 1):
        inner = minimize(al.merit, z, jac=True, method="L-BFGS-B", bounds=bounds, options=options)
        total_inner += int(inner.nit)
        if not inner.success:
            logger.debug("outer %d: inner exit '%s' after %d iterations",
                         outer, inner.message, inner.nit)
        z = problem.project(inner.x)
        c, g = problem.eq(z), problem.ineq(z)
        eq_violation, ineq_violation = _violations(c, g)
        violation = max(eq_violation, ineq_violation)
        objective = problem.value(z)

        al.update_multipliers(c, g)
        kkt = kkt_check(problem, z, al.multipliers, total_inner)
        refined = least_squares_multipliers(problem, z, al.mu)
        kkt_refined = kkt_check(problem, z, refined, total_inner)
        if kkt_refined.stationarity < kkt.stationarity:
            al.lam = refined.eq
            kkt = kkt_refined

        feasible = eq_violation <= settings.eq_tol and ineq_violation <= settings.ineq_tol
        accepted = best is None or _better(violation, objective, best, settings)
        if accepted:
            best = (violation, objective, z.copy(), al.multipliers, kkt)
        history.append(IterationRecord(outer, objective, eq_violation, ineq_violation,
                                       al.rho, int(inner.nit), accepted))
        logger.info("outer %3d  f=%.8e  eq=%.3e  ineq=%.3e  rho=%.1e  inner=%d",
                    outer, objective, eq_violation, ineq_violation, al.rho, inner.nit)

        if feasible and kkt.stationarity <= 10.0 * settings.eq_tol:
            status = CONVERGED
            best = (violation, objective, z.copy(), al.multipliers, kkt)
            break
        if violation > 0.25 * prev_violation and not feasible:
            if al.rho >= PENALTY_CEILING and violation > 0.9 * prev_violation:
                status = INFEASIBLE
                logger.warning("penalty %.1e reached with violation stagnant at %.3e",
                               al.rho, violation)
                break
            al.rho *= settings.penalty_growth
        prev_violation = violation

    _, objective, z_best, multipliers, kkt = best
    return SolveResult(
        x=z_best,
        objective=objective,
        status=status,
        kkt=kkt,
        multipliers=multipliers,
        history=history,
    )


def _better(violation: float, objective: float, best, settings: SolverSettings) -> bool:
    best_violation, best_objective = best[0], best[1]
    tol = max(settings.eq_tol, settings.ineq_tol)
    if violation <= tol and best_violation <= tol:
        return objective <= best_objective
    return violation <= best_violation
