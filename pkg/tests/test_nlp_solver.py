import numpy as np
import pytest

from quadplan.services.nlp_problem import (
    NlpProblem, check_gradients, fd_gradient, scale, to_scaled, unscale,
)
from quadplan.services.nlp_solver import (
    CONVERGED, INFEASIBLE, Multipliers, SolverSettings, kkt_check, least_squares_multipliers,
    solve,
)
from quadplan.services.transcription import CollocationGrid, OcpModel, split_solution, transcribe_model

TIGHT = SolverSettings(max_outer=100, max_inner=5000, step_tol=1e-10, stall_tol=0.0)


def box(n, lo=-10.0, hi=10.0):
    return np.full(n, lo), np.full(n, hi)


def test_equality_constrained_scalar():
    lower, upper = box(1)
    problem = NlpProblem(
        objective=lambda z: z[0] ** 2,
        objective_grad=lambda z: 2 * z,
        eq_constraints=lambda z: z - 3.0,
        eq_jacobian=lambda z: np.eye(1),
        n_eq=1, lower=lower, upper=upper,
    )
    result = solve(problem, np.zeros(1), TIGHT)
    assert result.status == CONVERGED
    assert result.x[0] == pytest.approx(3.0, abs=1e-6)
    assert result.multipliers.eq[0] == pytest.approx(-6.0, abs=1e-3)
    assert result.kkt.eq_violation <= 1e-6


def test_active_inequality():
    lower, upper = box(1)
    problem = NlpProblem(
        objective=lambda z: (z[0] - 2.0) ** 2,
        objective_grad=lambda z: 2 * (z - 2.0),
        ineq_constraints=lambda z: z - 1.0,
        ineq_jacobian=lambda z: np.eye(1),
        n_ineq=1, lower=lower, upper=upper,
    )
    result = solve(problem, np.zeros(1), TIGHT)
    assert result.converged
    assert result.x[0] == pytest.approx(1.0, abs=1e-5)
    assert result.multipliers.ineq[0] == pytest.approx(2.0, abs=1e-3)
    assert result.kkt.complementarity <= 1e-4


def test_bound_only_problem_stops_on_the_box():
    problem = NlpProblem(objective=lambda z: float(np.sum((z - 5.0) ** 2)),
                         objective_grad=lambda z: 2 * (z - 5.0),
                         lower=np.zeros(2), upper=np.array([3.0, 10.0]))
    result = solve(problem, np.ones(2), TIGHT)
    assert result.converged
    np.testing.assert_allclose(result.x, [3.0, 5.0], atol=1e-6)
    assert result.kkt.stationarity <= 1e-5


def test_result_improves_on_feasible_start():
    lower, upper = box(2)
    problem = NlpProblem(
        objective=lambda z: (z[0] - 1.0) ** 2 + (z[1] - 2.0) ** 2,
        objective_grad=lambda z: 2 * (z - np.array([1.0, 2.0])),
        eq_constraints=lambda z: np.array([z[0] + z[1] - 1.0]),
        eq_jacobian=lambda z: np.array([[1.0, 1.0]]),
        n_eq=1, lower=lower, upper=upper,
    )
    z0 = np.array([0.5, 0.5])
    result = solve(problem, z0, TIGHT)
    assert result.converged
    assert result.objective <= problem.value(z0)
    np.testing.assert_allclose(result.x, [0.0, 1.0], atol=1e-5)


def test_contradictory_equalities_are_infeasible():
    lower, upper = box(1)
    problem = NlpProblem(
        objective=lambda z: 0.0,
        objective_grad=lambda z: np.zeros(1),
        eq_constraints=lambda z: np.array([z[0] - 1.0, z[0] - 2.0]),
        eq_jacobian=lambda z: np.array([[1.0], [1.0]]),
        n_eq=2, lower=lower, upper=upper,
    )
    result = solve(problem, np.zeros(1), SolverSettings(max_outer=40))
    assert result.status == INFEASIBLE
    assert not result.converged
    assert result.kkt.eq_violation == pytest.approx(0.5, abs=1e-3)


def test_accepted_iterates_never_lose_feasibility():
    lower, upper = box(2)
    problem = NlpProblem(
        objective=lambda z: z[0] ** 4 + z[1] ** 2,
        eq_constraints=lambda z: np.array([z[0] * z[1] - 1.0]),
        n_eq=1, lower=lower, upper=upper,
    )
    result = solve(problem, np.array([2.0, 2.0]), SolverSettings(max_outer=30))
    tol = 1e-6
    accepted = [max(r.eq_violation, r.ineq_violation) for r in result.history if r.accepted]
    for before, after in zip(accepted, accepted[1:]):
        assert after <= before or max(before, after) <= tol
    assert all(r.penalty >= 10.0 for r in result.history)


def test_finite_difference_fallback():
    problem = NlpProblem(objective=lambda z: float(np.sum(np.sin(z))), lower=-np.ones(3),
                         upper=np.ones(3))
    z = np.array([0.1, -0.4, 0.7])
    np.testing.assert_allclose(problem.gradient(z), np.cos(z), atol=1e-8)
    np.testing.assert_allclose(fd_gradient(np.sum, z), np.ones(3), atol=1e-8)


def test_bounds_are_checked():
    with pytest.raises(ValueError):
        NlpProblem(objective=lambda z: 0.0, lower=np.ones(2), upper=np.zeros(2))
    with pytest.raises(ValueError):
        NlpProblem(objective=lambda z: 0.0, lower=np.zeros(2), upper=np.array([1.0, np.inf]))


def test_settings_validation():
    with pytest.raises(ValueError, match="penalty_growth"):
        SolverSettings(penalty_growth=1.0).validate()
    with pytest.raises(ValueError, match="max_outer"):
        SolverSettings(max_outer=0).validate()


def quadratic_problem(grad_error=0.0):
    target = np.array([1.0, -2.0, 3.0])

    def eq(z):
        return np.array([z[0] * z[1] + z[2]])

    return NlpProblem(
        objective=lambda z: float(np.sum((z - target) ** 2)),
        objective_grad=lambda z: 2 * (z - target) + grad_error,
        eq_constraints=eq,
        eq_jacobian=lambda z: np.array([[z[1], z[0], 1.0]]),
        n_eq=1,
        lower=-np.full(3, 20.0), upper=np.full(3, 20.0),
        var_scale=np.array([1.0, 2.0, 4.0]), eq_scale=np.array([3.0]), obj_scale=5.0,
    )


def test_gradient_check_accepts_correct_derivatives():
    problem = quadratic_problem()
    report = check_gradients(problem, np.array([1.01, -1.99, 3.02]))
    assert report.worst < 1e-6


def test_gradient_check_flags_wrong_derivatives():
    report = check_gradients(quadratic_problem(grad_error=0.5), np.array([1.01, -1.99, 3.02]))
    assert report.objective > 1e-2


def test_scaling_round_trip_preserves_values():
    problem = quadratic_problem()
    scaled = scale(problem)
    z = np.array([0.5, 1.5, -2.0])
    y = to_scaled(scaled, z)
    np.testing.assert_allclose(unscale(scaled, y), z)
    assert scaled.value(y) == pytest.approx(problem.value(z) / 5.0)
    np.testing.assert_allclose(scaled.eq(y), problem.eq(z) / 3.0)
    np.testing.assert_allclose(scaled.lower, problem.lower / problem.var_scale)


def test_kkt_check_at_known_optimum():
    lower, upper = box(1)
    problem = NlpProblem(objective=lambda z: z[0] ** 2, objective_grad=lambda z: 2 * z,
                         eq_constraints=lambda z: z - 3.0, eq_jacobian=lambda z: np.eye(1),
                         n_eq=1, lower=lower, upper=upper)
    report = kkt_check(problem, np.array([3.0]), Multipliers(np.array([-6.0]), np.zeros(0)))
    assert report.stationarity == pytest.approx(0.0, abs=1e-12)
    assert report.eq_violation == 0.0


def double_integrator():
    def dynamics(t, X, U):
        return np.column_stack([X[:, 1], U[:, 0]])

    def jacobian(t, X, U):
        n = X.shape[0]
        A = np.zeros((n, 2, 2))
        A[:, 0, 1] = 1.0
        B = np.zeros((n, 2, 1))
        B[:, 1, 0] = 1.0
        return A, B

    def cost_grad(t, X, U):
        return np.zeros_like(X), 2.0 * U

    return OcpModel(
        n_states=2, n_controls=1,
        dynamics=dynamics,
        running_cost=lambda t, X, U: U[:, 0] ** 2,
        state_lower=np.full(2, -10.0), state_upper=np.full(2, 10.0),
        control_lower=np.full(1, -50.0), control_upper=np.full(1, 50.0),
        dynamics_jacobian=jacobian,
        running_cost_grad=cost_grad,
    )


def test_double_integrator_minimum_effort():
    grid = CollocationGrid(n_intervals=50, t0=0.0, tf=1.0)
    problem = transcribe_model(double_integrator(), grid, [0.0, 0.0], [1.0, 0.0])
    assert problem.n_vars == 51 * 3
    assert problem.n_eq == 50 * 2 + 4
    result = solve(problem, np.zeros(problem.n_vars), TIGHT)
    assert result.converged
    assert result.objective == pytest.approx(12.0, abs=0.1)
    traj = split_solution(problem, result.x)
    np.testing.assert_allclose(traj.controls[:, 0], 6.0 - 12.0 * traj.times, atol=0.2)
    np.testing.assert_allclose(traj.final_state, [1.0, 0.0], atol=1e-6)


def test_double_integrator_with_numeric_derivatives():
    model = double_integrator()
    model.dynamics_jacobian = None
    model.running_cost_grad = None
    grid = CollocationGrid(n_intervals=10, t0=0.0, tf=1.0)
    problem = transcribe_model(model, grid, [0.0, 0.0], [1.0, 0.0])
    z = np.linspace(0.0, 1.0, problem.n_vars)
    assert check_gradients(problem, z).worst < 1e-5


def test_optimal_start_returns_without_inner_iterations():
    lower, upper = box(2)
    problem = NlpProblem(
        objective=lambda z: (z[0] - 1.0) ** 2 + (z[1] - 2.0) ** 2,
        objective_grad=lambda z: 2 * (z - np.array([1.0, 2.0])),
        eq_constraints=lambda z: np.array([z[0] + z[1] - 3.0]),
        eq_jacobian=lambda z: np.array([[1.0, 1.0]]),
        n_eq=1, lower=lower, upper=upper,
    )
    result = solve(problem, np.array([1.0, 2.0]))
    assert result.converged
    np.testing.assert_array_equal(result.x, [1.0, 2.0])
    assert [(r.outer, r.inner_iterations) for r in result.history] == [(0, 0)]
    assert result.multipliers.eq[0] == pytest.approx(0.0, abs=1e-12)
    assert result.kkt.iterations == 0


def test_least_squares_multipliers_skip_active_bounds():
    problem = NlpProblem(
        objective=lambda z: z[0] ** 2 + z[1],
        objective_grad=lambda z: np.array([2 * z[0], 1.0]),
        eq_constraints=lambda z: np.array([z[0] - 1.0]),
        eq_jacobian=lambda z: np.array([[1.0, 0.0]]),
        n_eq=1, lower=np.array([-5.0, 0.0]), upper=np.full(2, 5.0),
    )
    z = np.array([1.0, 0.0])
    multipliers = least_squares_multipliers(problem, z, np.zeros(0))
    assert multipliers.eq[0] == pytest.approx(-2.0, abs=1e-9)
    assert kkt_check(problem, z, multipliers).stationarity == pytest.approx(0.0, abs=1e-9)


def test_default_settings_converge_on_double_integrator():
    grid = CollocationGrid(n_intervals=20, t0=0.0, tf=1.0)
    problem = transcribe_model(double_integrator(), grid, [0.0, 0.0], [1.0, 0.0])
    result = solve(problem, np.zeros(problem.n_vars))
    assert result.converged
    assert result.kkt.stationarity <= 1e-5
    assert result.objective == pytest.approx(12.0, abs=0.2)
