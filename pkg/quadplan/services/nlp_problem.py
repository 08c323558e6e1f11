"""Nonlinear program container, variable scaling and derivative checks."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

FD_STEP = 1e-6


def _as_array(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float))


@dataclass
class NlpProblem:
    """Smooth objective with equalities ``c(z) = 0``, inequalities ``g(z) <= 0`` and a box.

    Derivative callbacks are optional; missing ones fall back to central
    finite differences with step ``fd_step``. Jacobians may be dense arrays or
    SciPy sparse matrices.
    """

    objective: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    eq_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ineq_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    objective_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eq_jacobian: Optional[Callable] = None
    ineq_jacobian: Optional[Callable] = None
    n_eq: int = 0
    n_ineq: int = 0
    var_scale: Optional[np.ndarray] = None
    eq_scale: Optional[np.ndarray] = None
    ineq_scale: Optional[np.ndarray] = None
    obj_scale: float = 1.0
    fd_step: float = FD_STEP
    layout: dict = field(default_factory=dict)
    source: Optional["NlpProblem"] = None

    def __post_init__(self):
        self.lower = _as_array(self.lower)
        self.upper = _as_array(self.upper)
        n = self.lower.shape[0]
        if self.upper.shape != (n,):
            raise ValueError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("every variable needs finite bounds")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        self.var_scale = np.ones(n) if self.var_scale is None else _as_array(self.var_scale)
        self.eq_scale = np.ones(self.n_eq) if self.eq_scale is None else _as_array(self.eq_scale)
        self.ineq_scale = (np.ones(self.n_ineq) if self.ineq_scale is None
                           else _as_array(self.ineq_scale))

    @property
    def n_vars(self) -> int:
        return self.lower.shape[0]

    def value(self, z) -> float:
        return float(self.objective(z))

    def gradient(self, z) -> np.ndarray:
        if self.objective_grad is not None:
            return np.asarray(self.objective_grad(z), dtype=float)
        return fd_gradient(self.objective, z, self.fd_step)

    def eq(self, z) -> np.ndarray:
        if self.eq_constraints is None:
            return np.zeros(0)
        return _as_array(self.eq_constraints(z))

    def ineq(self, z) -> np.ndarray:
        if self.ineq_constraints is None:
            return np.zeros(0)
        return _as_array(self.ineq_constraints(z))

    def eq_jac(self, z):
        if self.eq_constraints is None:
            return sparse.csr_matrix((0, self.n_vars))
        if self.eq_jacobian is not None:
            return self.eq_jacobian(z)
        return fd_jacobian(self.eq, z, self.fd_step)

    def ineq_jac(self, z):
        if self.ineq_constraints is None:
            return sparse.csr_matrix((0, self.n_vars))
        if self.ineq_jacobian is not None:
            return self.ineq_jacobian(z)
        return fd_jacobian(self.ineq, z, self.fd_step)

    def project(self, z) -> np.ndarray:
        return np.clip(np.asarray(z, dtype=float), self.lower, self.upper)


def fd_gradient(fun, z, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    z = np.asarray(z, dtype=float)
    grad = np.empty_like(z)
    z_step = z.copy()
    for i in range(z.size):
        z_step[i] = z[i] + step
        f_plus = fun(z_step)
        z_step[i] = z[i] - step
        f_minus = fun(z_step)
        z_step[i] = z[i]
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def fd_jacobian(fun, z, step: float = FD_STEP) -> np.ndarray:
    """Dense central-difference Jacobian of a vector function."""
    z = np.asarray(z, dtype=float)
    columns = []
    z_step = z.copy()
    for i in range(z.size):
        z_step[i] = z[i] + step
        c_plus = _as_array(fun(z_step))
        z_step[i] = z[i] - step
        c_minus = _as_array(fun(z_step))
        z_step[i] = z[i]
        columns.append((c_plus - c_minus) / (2.0 * step))
    return np.column_stack(columns)


def _scale_matrix(J, row, col):
    if sparse.issparse(J):
        return (sparse.diags(row) @ J @ sparse.diags(col)).tocsr()
    return row[:, None] * np.asarray(J) * col[None, :]


def scale(problem: NlpProblem) -> NlpProblem:
    """Problem in variables ``y = z / var_scale`` with scaled rows and objective.

    The returned problem keeps a reference to the physical one in ``source``;
    :func:`unscale` maps its solutions back.
    """
    d = problem.var_scale
    f_s = problem.obj_scale
    r_eq = 1.0 / problem.eq_scale
    r_in = 1.0 / problem.ineq_scale

    def objective(y):
        return problem.value(d * y) / f_s

    def objective_grad(y):
        return problem.gradient(d * y) * d / f_s

    eq = ineq = eq_jac = ineq_jac = None
    if problem.eq_constraints is not None:
        def eq(y):
            return problem.eq(d * y) * r_eq

        def eq_jac(y):
            return _scale_matrix(problem.eq_jac(d * y), r_eq, d)

    if problem.ineq_constraints is not None:
        def ineq(y):
            return problem.ineq(d * y) * r_in

        def ineq_jac(y):
            return _scale_matrix(problem.ineq_jac(d * y), r_in, d)

    return NlpProblem(
        objective=objective,
        lower=problem.lower / d,
        upper=problem.upper / d,
        eq_constraints=eq,
        ineq_constraints=ineq,
        objective_grad=objective_grad,
        eq_jacobian=eq_jac,
        ineq_jacobian=ineq_jac,
        n_eq=problem.n_eq,
        n_ineq=problem.n_ineq,
        fd_step=problem.fd_step,
        layout=problem.layout,
        source=problem,
    )


def to_scaled(scaled: NlpProblem, z) -> np.ndarray:
    return np.asarray(z, dtype=float) / scaled.source.var_scale


def unscale(scaled: NlpProblem, y) -> np.ndarray:
    """Physical decision vector for a solution of a scaled problem."""
    return np.asarray(y, dtype=float) * scaled.source.var_scale


@dataclass(frozen=True)
class GradientReport:
    """Worst relative disagreement between supplied and finite-difference derivatives."""

    objective: float
    eq_jacobian: float
    ineq_jacobian: float

    @property
    def worst(self) -> float:
        return max(self.objective, self.eq_jacobian, self.ineq_jacobian)


def _relative_error(analytic, reference) -> float:
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if reference.size == 0:
        return 0.0
    scale_ = max(np.max(np.abs(reference)), np.max(np.abs(analytic)), 1e-12)
    return float(np.max(np.abs(analytic - reference)) / scale_)


def check_directions(n: int, count: int) -> np.ndarray:
    """Fixed, dense unit directions used for Jacobian-vector checks."""
    i = np.arange(1, n + 1)
    directions = np.array([np.sin(i * (k + 1) * 0.7071 + k) for k in range(count)])
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def check_gradients(problem: NlpProblem, z, n_directions: int = 3,
                    step: float = FD_STEP) -> GradientReport:
    """Compare supplied derivatives with central differences on scaled variables.

    Args:
        problem: Physical problem (scaled internally) or an already scaled one.
        z: Physical decision vector at which to compare.
        n_directions: Number of Jacobian-vector products checked per constraint block.
        step: Finite-difference step in scaled variables.
    """
    scaled = problem if problem.source is not None else scale(problem)
    y = to_scaled(scaled, z) if problem.source is None else np.asarray(z, dtype=float)

    grad_error = _relative_error(scaled.gradient(y), fd_gradient(scaled.value, y, step))

    def jvp_error(fun, jac) -> float:
        J = jac(y)
        worst = 0.0
        for v in check_directions(y.size, n_directions):
            fd = (fun(y + step * v) - fun(y - step * v)) / (2.0 * step)
            worst = max(worst, _relative_error(J @ v, fd))
        return worst

    eq_error = jvp_error(scaled.eq, scaled.eq_jac) if scaled.n_eq else 0.0
    ineq_error = jvp_error(scaled.ineq, scaled.ineq_jac) if scaled.n_ineq else 0.0
    return GradientReport(grad_error, eq_error, ineq_error)
