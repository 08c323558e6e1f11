"""Trapezoidal direct collocation of fixed-horizon optimal control problems.

The decision vector is node-major: ``[x_0, u_0, x_1, u_1, ..., x_N, u_N]``.
Equalities are the ``N * nx`` interval defects followed by the initial and
final state pins; inequalities are path constraints ``g(t, x, u) <= 0``
imposed at every node.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from quadplan.errors import DomainError
from quadplan.services.nlp_problem import NlpProblem, scale, to_scaled, unscale
from quadplan.services.nlp_solver import SolveResult, SolverSettings, solve
from quadplan.services.power_energy import power_integrand_grad, rotor_power
from quadplan.services.quad_model import (
    N_CONTROLS, N_STATES, POSITION, ROTORS, check_state, control_map,
    dynamics_jacobian, dynamics_rhs, hover_speed, mixing_matrix,
)
from quadplan.services.trajectory import Trajectory
from quadplan.services.vehicle import VehicleConfig
from quadplan.services.wind_field import WindModelParams, wind_acceleration

logger = logging.getLogger(__name__)

NODE_FD_STEP = 1e-6


@dataclass(frozen=True)
class MissionSpec:
    """Fixed-time transfer between two pinned states."""

    x0: np.ndarray
    xf: np.ndarray
    t0: float
    tf: float

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def validate(self, limits=None) -> None:
        if not self.tf > self.t0:
            raise DomainError(f"mission.tf ({self.tf}) must exceed mission.t0 ({self.t0})")
        for name, state in (("x0", self.x0), ("xf", self.xf)):
            if np.shape(state) != (N_STATES,):
                raise DomainError(f"mission.{name} must have {N_STATES} entries")
            if limits is not None:
                try:
                    check_state(state, limits)
                except DomainError as exc:
                    raise DomainError(f"mission.{name}: {exc}") from exc


@dataclass(frozen=True)
class CollocationGrid:
    """Uniform partition of ``[t0, tf]`` into ``n_intervals`` intervals."""

    n_intervals: int = 100
    t0: float = 0.0
    tf: float = 1.0

    def validate(self) -> None:
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 2:
            raise DomainError(f"grid.n_intervals must be an integer >= 2, got {self.n_intervals}")
        if not self.tf > self.t0:
            raise DomainError("grid end time must exceed its start time")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.n_intervals + 1)

    @property
    def step(self) -> float:
        return (self.tf - self.t0) / self.n_intervals

    @classmethod
    def for_mission(cls, mission: MissionSpec, n_intervals: int) -> "CollocationGrid":
        return cls(n_intervals=n_intervals, t0=mission.t0, tf=mission.tf)


@dataclass
class OcpModel:
    """Continuous problem data evaluated on all nodes at once.

    Callbacks receive ``t`` of shape (n,), ``X`` of shape (n, nx) and ``U`` of
    shape (n, nu). Missing derivative callbacks are replaced by vectorized
    central differences over the node columns.
    """

    n_states: int
    n_controls: int
    dynamics: Callable
    running_cost: Callable
    state_lower: np.ndarray
    state_upper: np.ndarray
    control_lower: np.ndarray
    control_upper: np.ndarray
    dynamics_jacobian: Optional[Callable] = None
    running_cost_grad: Optional[Callable] = None
    path_constraints: Optional[Callable] = None
    path_jacobian: Optional[Callable] = None
    n_path: int = 0
    state_scale: Optional[np.ndarray] = None
    control_scale: Optional[np.ndarray] = None
    path_scale: Optional[np.ndarray] = None
    cost_scale: float = 1.0

    def __post_init__(self):
        if self.state_scale is None:
            self.state_scale = np.ones(self.n_states)
        if self.control_scale is None:
            self.control_scale = np.ones(self.n_controls)
        if self.path_scale is None:
            self.path_scale = np.ones(self.n_path)

    def jacobians(self, t, X, U):
        if self.dynamics_jacobian is not None:
            return self.dynamics_jacobian(t, X, U)
        return _node_fd_jacobian(self.dynamics, t, X, U)

    def cost_gradients(self, t, X, U):
        if self.running_cost_grad is not None:
            return self.running_cost_grad(t, X, U)
        Lx, Lu = _node_fd_jacobian(lambda t_, X_, U_: self.running_cost(t_, X_, U_)[:, None],
                                   t, X, U)
        return Lx[:, 0, :], Lu[:, 0, :]

    def path_jacobians(self, t, X, U):
        if self.path_jacobian is not None:
            return self.path_jacobian(t, X, U)
        return _node_fd_jacobian(self.path_constraints, t, X, U)


def _node_fd_jacobian(fun, t, X, U, step: float = NODE_FD_STEP):
    """Per-node Jacobians by perturbing one column of every node at a time."""
    n, nx = X.shape
    nu = U.shape[1]
    base = fun(t, X, U)
    dX = np.empty((n, base.shape[1], nx))
    dU = np.empty((n, base.shape[1], nu))
    for j in range(nx):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, j] += step
        Xm[:, j] -= step
        dX[:, :, j] = (fun(t, Xp, U) - fun(t, Xm, U)) / (2.0 * step)
    for j in range(nu):
        Up, Um = U.copy(), U.copy()
        Up[:, j] += step
        Um[:, j] -= step
        dU[:, :, j] = (fun(t, X, Up) - fun(t, X, Um)) / (2.0 * step)
    return dX, dU


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    h = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def transcribe_model(model: OcpModel, grid: CollocationGrid, x0, xf) -> NlpProblem:
    """Collocate ``model`` on ``grid`` with both end states pinned."""
    grid.validate()
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    nx, nu, ng = model.n_states, model.n_controls, model.n_path
    m = nx + nu
    t = grid.nodes
    n = t.size
    N = n - 1
    h = np.diff(t)
    weights = trapezoid_weights(t)

    for name, state in (("initial", x0), ("final", xf)):
        if np.any(state < model.state_lower) or np.any(state > model.state_upper):
            raise DomainError(f"{name} state violates the state bounds")

    def split(z):
        Z = np.asarray(z, dtype=float).reshape(n, m)
        return Z[:, :nx], Z[:, nx:]

    def objective(z):
        X, U = split(z)
        return float(weights @ model.running_cost(t, X, U))

    def objective_grad(z):
        X, U = split(z)
        Lx, Lu = model.cost_gradients(t, X, U)
        G = np.hstack([weights[:, None] * Lx, weights[:, None] * Lu])
        return G.ravel()

    def eq_constraints(z):
        X, U = split(z)
        F = model.dynamics(t, X, U)
        defects = X[1:] - X[:-1] - 0.5 * h[:, None] * (F[:-1] + F[1:])
        return np.concatenate([defects.ravel(), X[0] - x0, X[-1] - xf])

    # Sparsity pattern of the defect and pin rows is fixed; only values change.
    k_idx = np.arange(N)[:, None, None]
    i_idx = np.arange(nx)[None, :, None]
    j_idx = np.arange(m)[None, None, :]
    defect_rows = np.broadcast_to(k_idx * nx + i_idx, (N, nx, m))
    left_cols = np.broadcast_to(k_idx * m + j_idx, (N, nx, m))
    right_cols = left_cols + m
    pin_rows = N * nx + np.arange(2 * nx)
    pin_cols = np.concatenate([np.arange(nx), N * m + np.arange(nx)])
    eq_rows = np.concatenate([defect_rows.ravel(), defect_rows.ravel(), pin_rows])
    eq_cols = np.concatenate([left_cols.ravel(), right_cols.ravel(), pin_cols])
    n_eq = N * nx + 2 * nx
    n_vars = n * m
    selector = np.zeros((nx, m))
    selector[:, :nx] = np.eye(nx)

    def eq_jacobian(z):
        X, U = split(z)
        A, B = model.jacobians(t, X, U)
        D = np.concatenate([A, B], axis=2)
        left = -selector - 0.5 * h[:, None, None] * D[:-1]
        right = selector - 0.5 * h[:, None, None] * D[1:]
        data = np.concatenate([left.ravel(), right.ravel(), np.ones(2 * nx)])
        return sparse.csr_matrix((data, (eq_rows, eq_cols)), shape=(n_eq, n_vars))

    ineq_constraints = ineq_jacobian = None
    if model.path_constraints is not None and ng > 0:
        node = np.arange(n)[:, None, None]
        r_idx = np.arange(ng)[None, :, None]
        in_rows = np.broadcast_to(node * ng + r_idx, (n, ng, m)).ravel()
        in_cols = np.broadcast_to(node * m + j_idx, (n, ng, m)).ravel()

        def ineq_constraints(z):
            X, U = split(z)
            return model.path_constraints(t, X, U).ravel()

        def ineq_jacobian(z):
            X, U = split(z)
            Gx, Gu = model.path_jacobians(t, X, U)
            data = np.concatenate([Gx, Gu], axis=2).ravel()
            return sparse.csr_matrix((data, (in_rows, in_cols)), shape=(n * ng, n_vars))

    lower = np.tile(np.concatenate([model.state_lower, model.control_lower]), (n, 1))
    upper = np.tile(np.concatenate([model.state_upper, model.control_upper]), (n, 1))
    lower[0, :nx] = upper[0, :nx] = x0
    lower[-1, :nx] = upper[-1, :nx] = xf

    node_scale = np.concatenate([model.state_scale, model.control_scale])
    return NlpProblem(
        objective=objective,
        lower=lower.ravel(),
        upper=upper.ravel(),
        eq_constraints=eq_constraints,
        ineq_constraints=ineq_constraints,
        objective_grad=objective_grad,
        eq_jacobian=eq_jacobian,
        ineq_jacobian=ineq_jacobian,
        n_eq=n_eq,
        n_ineq=n * ng if ineq_constraints is not None else 0,
        var_scale=np.tile(node_scale, n),
        eq_scale=np.tile(model.state_scale, N + 2),
        ineq_scale=np.tile(model.path_scale, n) if ng else None,
        obj_scale=model.cost_scale,
        layout={"times": t, "n_states": nx, "n_controls": nu, "n_nodes": n, "n_path": ng},
    )


def split_solution(problem: NlpProblem, z) -> Trajectory:
    """Node trajectory encoded in a decision vector."""
    lay = problem.layout
    Z = np.asarray(z, dtype=float).reshape(lay["n_nodes"], lay["n_states"] + lay["n_controls"])
    return Trajectory(lay["times"], Z[:, :lay["n_states"]], Z[:, lay["n_states"]:])


def max_defect(problem: NlpProblem, z, scaled: bool = True) -> float:
    """Largest interval defect, in scaled units unless ``scaled`` is False."""
    lay = problem.layout
    n_def = (lay["n_nodes"] - 1) * lay["n_states"]
    c = problem.eq(z)[:n_def]
    if scaled:
        c = c / problem.eq_scale[:n_def]
    return float(np.max(np.abs(c))) if c.size else 0.0


# Quadrotor problem ----------------------------------------------------------

N_PATH = 8


def position_scale(mission: MissionSpec) -> float:
    return max(1.0, float(np.max(np.abs(mission.xf[POSITION] - mission.x0[POSITION]))))


def quadrotor_model(mission: MissionSpec, vehicle: VehicleConfig,
                    wind: Optional[WindModelParams] = None, eff=None) -> OcpModel:
    """Minimum-energy transfer of the dynamic-extension quadrotor model."""
    quad, motor, lim = vehicle.quad, vehicle.motor, vehicle.limits
    eff = vehicle.efficiency if eff is None else eff
    mix = mixing_matrix(quad)

    def dynamics(t, X, U):
        return dynamics_rhs(X, U, wind_acceleration(t, wind), quad)

    def jacobian(t, X, U):
        return dynamics_jacobian(X, U, quad)

    def cost(t, X, U):
        return np.sum(rotor_power(X[:, ROTORS], U, eff, motor), axis=-1)

    def cost_grad(t, X, U):
        d_w, d_a = power_integrand_grad(X[:, ROTORS], U, eff, motor)
        Lx = np.zeros_like(X)
        Lx[:, ROTORS] = d_w
        return Lx, d_a

    def path(t, X, U):
        u1, u2, u3, u4 = control_map(X[:, ROTORS], quad, check=False)
        return np.stack([
            u1 - lim.T_max, -u1,
            u2 - lim.u_max, -u2 - lim.u_max,
            u3 - lim.u_max, -u3 - lim.u_max,
            u4 - lim.u_max, -u4 - lim.u_max,
        ], axis=1)

    signs = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    wrench_row = np.array([0, 0, 1, 1, 2, 2, 3, 3])

    def path_jac(t, X, U):
        w = X[:, ROTORS]
        dwrench = mix[None, :, :] * 2.0 * w[:, None, :]
        Gx = np.zeros((X.shape[0], N_PATH, N_STATES))
        Gx[:, :, ROTORS] = signs[None, :, None] * dwrench[:, wrench_row, :]
        return Gx, np.zeros((X.shape[0], N_PATH, N_CONTROLS))

    s_pos = position_scale(mission)
    lo_pos = np.minimum(mission.x0[POSITION], mission.xf[POSITION]) - s_pos
    hi_pos = np.maximum(mission.x0[POSITION], mission.xf[POSITION]) + s_pos

    state_lower = np.empty(N_STATES)
    state_upper = np.empty(N_STATES)
    state_scale = np.empty(N_STATES)
    state_lower[POSITION], state_upper[POSITION], state_scale[POSITION] = lo_pos, hi_pos, s_pos
    for idx in (1, 3, 5):
        state_lower[idx], state_upper[idx], state_scale[idx] = -lim.v_max, lim.v_max, lim.v_max
    for idx in (6, 8):
        state_lower[idx], state_upper[idx], state_scale[idx] = (
            -lim.angle_max, lim.angle_max, np.pi / 2)
    state_lower[10], state_upper[10], state_scale[10] = -np.pi, np.pi, np.pi
    for idx in (7, 9, 11):
        state_lower[idx], state_upper[idx], state_scale[idx] = (
            -lim.rate_max, lim.rate_max, lim.rate_max)
    state_lower[ROTORS], state_upper[ROTORS], state_scale[ROTORS] = 0.0, lim.omega_max, lim.omega_max

    w_h = hover_speed(quad)
    hover_power = float(np.sum(rotor_power(np.full(4, w_h), np.zeros(4), eff, motor)))
    return OcpModel(
        n_states=N_STATES,
        n_controls=N_CONTROLS,
        dynamics=dynamics,
        running_cost=cost,
        state_lower=state_lower,
        state_upper=state_upper,
        control_lower=np.full(N_CONTROLS, -lim.alpha_max),
        control_upper=np.full(N_CONTROLS, lim.alpha_max),
        dynamics_jacobian=jacobian,
        running_cost_grad=cost_grad,
        path_constraints=path,
        path_jacobian=path_jac,
        n_path=N_PATH,
        state_scale=state_scale,
        control_scale=np.full(N_CONTROLS, lim.alpha_max),
        path_scale=np.array([lim.T_max] * 2 + [lim.u_max] * 6),
        cost_scale=max(1.0, hover_power * mission.duration),
    )


def transcribe(mission: MissionSpec, grid: CollocationGrid, vehicle: VehicleConfig,
               wind: Optional[WindModelParams] = None, eff=None) -> NlpProblem:
    """Nonlinear program for the minimum-energy quadrotor transfer."""
    mission.validate(vehicle.limits)
    grid.validate()
    model = quadrotor_model(mission, vehicle, wind, eff)
    problem = transcribe_model(model, grid, mission.x0, mission.xf)
    logger.debug("transcribed %d variables, %d equalities, %d inequalities",
                 problem.n_vars, problem.n_eq, problem.n_ineq)
    return problem


def initial_guess(mission: MissionSpec, grid: CollocationGrid, vehicle: VehicleConfig) -> np.ndarray:
    """Straight-line, constant-speed hover-attitude guess.

    End nodes carry the boundary states exactly; interior nodes move at the
    secant velocity with level attitude and rotors at hover speed.
    """
    tau = (grid.nodes - grid.t0) / (grid.tf - grid.t0)
    X = np.zeros((tau.size, N_STATES))
    for idx in (0, 2, 4, 10):
        X[:, idx] = mission.x0[idx] + tau * (mission.xf[idx] - mission.x0[idx])
    secant = (mission.xf - mission.x0) / (grid.tf - grid.t0)
    for pos_idx, vel_idx in ((0, 1), (2, 3), (4, 5), (10, 11)):
        X[1:-1, vel_idx] = secant[pos_idx]
    X[:, ROTORS] = hover_speed(vehicle.quad)
    X[0] = mission.x0
    X[-1] = mission.xf
    U = np.zeros((tau.size, N_CONTROLS))
    return np.hstack([X, U]).ravel()


class TrajectoryPlanner:
    """Transcribe, scale, solve and unscale one mission."""

    def __init__(self, vehicle: VehicleConfig, wind: Optional[WindModelParams] = None,
                 settings: Optional[SolverSettings] = None):
        self.vehicle = vehicle
        self.wind = wind
        self.settings = settings or SolverSettings()

    def plan(self, mission: MissionSpec, n_intervals: int = 100, z0=None) -> SolveResult:
        """
        Solve the minimum-energy problem for a mission.

        Args:
            mission: Pinned boundary states and horizon.
            n_intervals: Collocation intervals.
            z0: Optional physical starting point; defaults to :func:`initial_guess`.

        Returns:
            SolveResult with the node trajectory attached and the objective in joules.
        """
        grid = CollocationGrid.for_mission(mission, n_intervals)
        problem = transcribe(mission, grid, self.vehicle, self.wind)
        scaled = scale(problem)
        if z0 is None:
            z0 = initial_guess(mission, grid, self.vehicle)
        logger.info("planning %d intervals (%d variables), wind %s",
                    grid.n_intervals, problem.n_vars, "on" if self.wind else "off")
        result = solve(scaled, to_scaled(scaled, z0), self.settings)
        z = unscale(scaled, result.x)
        result.x = z
        result.objective = problem.value(z)
        result.trajectory = split_solution(problem, z)
        result.max_defect = max_defect(problem, z)
        logger.info("plan finished: status=%s energy=%.3f J", result.status, result.objective)
        return result
