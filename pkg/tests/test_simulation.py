import numpy as np
import pytest

from quadplan.errors import CascadeError, ConvergenceError, DivergenceError, DomainError
from quadplan.services.nlp_solver import SolverSettings
from quadplan.services.power_energy import trajectory_energy
from quadplan.services.quad_model import AuxControl, hover_speed, hover_state
from quadplan.services.simulation import (
    BaselineGains, NodeControlHold, SampledController, baseline_controller, compare_energy,
    minimum_jerk, replay_plan, rk4_rollout, rk4_step, savings_percent, simulate_baseline,
)
from quadplan.services.trajectory import Trajectory
from quadplan.services.transcription import MissionSpec, TrajectoryPlanner


def zero_control(t, s):
    return np.zeros(4)


def test_rk4_step_on_exponential():
    x = rk4_step(lambda t, x: x, 0.0, np.array([1.0]), 0.1)
    assert x[0] == pytest.approx(1.10517083, abs=1e-8)


def test_rk4_is_fourth_order():
    def fn(t, x):
        return np.array([np.cos(t) * x[0]])

    def end_error(steps):
        h = 2.0 / steps
        x = np.array([1.0])
        for k in range(steps):
            x = rk4_step(fn, k * h, x, h)
        return abs(x[0] - np.exp(np.sin(2.0)))

    ratio = end_error(20) / end_error(40)
    assert 12.0 < ratio < 20.0


def test_hover_rollout_stays_put(quad, limits, hover):
    traj = rk4_rollout(hover, zero_control, None, quad, limits, 0.0, 10.0, 0.01)
    assert len(traj) == 1001
    np.testing.assert_allclose(traj.final_state[[0, 2, 4]], hover[[0, 2, 4]], atol=1e-6)
    assert traj.times[-1] == pytest.approx(10.0)


def test_rollout_accepts_aux_control(quad, limits, hover):
    traj = rk4_rollout(hover, lambda t, s: AuxControl(1.0, 1.0, 1.0, 1.0), None, quad, limits,
                       0.0, 1.0, 0.1)
    np.testing.assert_allclose(traj.final_state[12:16], hover_speed(quad) + 1.0)


def test_rollout_clamps_rotor_speeds(quad, limits, hover):
    traj = rk4_rollout(hover, lambda t, s: np.full(4, 4000.0), None, quad, limits, 0.0, 1.0, 0.01)
    assert np.all(traj.rotor_speeds <= limits.omega_max)
    traj = rk4_rollout(hover, lambda t, s: np.full(4, -4000.0), None, quad, limits, 0.0, 1.0, 0.01)
    assert np.all(traj.rotor_speeds >= 0.0)


def test_rollout_rejects_bad_step(quad, limits, hover):
    with pytest.raises(DomainError):
        rk4_rollout(hover, zero_control, None, quad, limits, 0.0, 1.0, 0.0)


def test_rollout_divergence_guard(quad, limits, hover):
    def runaway(t, s):
        return np.zeros(4)

    s = hover.copy()
    s[1] = 5e5
    with pytest.raises(DivergenceError):
        rk4_rollout(s, runaway, None, quad, limits, 0.0, 10.0, 0.1)


def test_wind_pushes_hovering_vehicle(quad, limits, hover, table2_wind):
    traj = rk4_rollout(hover, zero_control, table2_wind, quad, limits, 0.0, 2.0, 0.01)
    assert traj.final_state[0] > 0.5
    assert traj.final_state[2] > 0.1


def test_minimum_jerk_profile():
    s, ds, dds = minimum_jerk(np.array([0.0, 5.0, 10.0]), 0.0, 10.0)
    np.testing.assert_allclose(s, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(ds[[0, 2]], 0.0, atol=1e-15)
    np.testing.assert_allclose(dds, 0.0, atol=1e-12)
    assert ds[1] == pytest.approx(1.875 / 10.0)


def test_controller_is_quiet_on_reference(quad, limits):
    s = hover_state(quad)
    mission = MissionSpec(s, s, 0.0, 10.0)
    alpha = baseline_controller(3.0, s, mission, BaselineGains(), quad, limits)
    np.testing.assert_allclose(alpha.as_array(), 0.0, atol=1e-8)


def test_controller_raises_thrust_when_low(quad, limits, mission):
    s = mission.x0.copy()
    s[4] = -1.0
    alpha = baseline_controller(0.0, s, mission, BaselineGains(), quad, limits).as_array()
    assert np.all(alpha > 0)


def test_controller_rejects_free_fall_command(quad, limits, mission):
    s = mission.x0.copy()
    s[4] = 20.0
    with pytest.raises(CascadeError):
        baseline_controller(0.0, s, mission, BaselineGains(), quad, limits)


def test_gains_validation():
    BaselineGains().validate()
    with pytest.raises(DomainError, match="kp_att"):
        BaselineGains(kp_att=10.0).validate()
    with pytest.raises(DomainError):
        BaselineGains(kd_pos=-1.0).validate()


def test_sampled_controller_holds_between_updates():
    calls = []

    def controller(t, s):
        calls.append(t)
        return np.full(4, t)

    held = SampledController(controller, 0.01)
    assert held(0.0, None)[0] == 0.0
    assert held(0.005, None)[0] == 0.0
    assert held(0.01, None)[0] == pytest.approx(0.01)
    assert len(calls) == 2


def test_sampled_controller_sees_step_start_states(hover, quad, limits):
    seen = []

    def controller(t, s):
        seen.append((t, np.array(s, copy=True)))
        return np.full(4, 50.0)

    held = SampledController(controller, 0.01)
    traj = rk4_rollout(hover, held, None, quad, limits, 0.0, 0.05, 0.001)
    times = np.array([t for t, _ in seen])
    np.testing.assert_allclose(times, np.linspace(0.0, 0.05, 6), atol=1e-12)
    for t, s in seen:
        np.testing.assert_array_equal(s, traj.states[int(round(t / 0.001))])
    np.testing.assert_array_equal(traj.controls, 50.0)


def test_node_hold_modes(hover):
    times = np.array([0.0, 1.0, 2.0])
    controls = np.array([[0.0] * 4, [10.0] * 4, [20.0] * 4])
    plan = Trajectory(times, np.tile(hover, (3, 1)), controls)
    assert NodeControlHold(plan, "zoh")(0.5)[0] == 0.0
    assert NodeControlHold(plan, "zoh")(1.0)[0] == 10.0
    assert NodeControlHold(plan, "foh")(1.5)[0] == pytest.approx(15.0)
    with pytest.raises(DomainError):
        NodeControlHold(plan, "cubic")


def test_baseline_rotation_symmetry(quad, vehicle):
    a = MissionSpec(hover_state(quad), hover_state(quad, (3.0, 0.0, 1.0)), 0.0, 5.0)
    b = MissionSpec(hover_state(quad), hover_state(quad, (0.0, 3.0, 1.0)), 0.0, 5.0)
    gains = BaselineGains()
    eff, motor = vehicle.efficiency, vehicle.motor
    e_a = trajectory_energy(simulate_baseline(a, vehicle, None, gains), eff, motor)
    e_b = trajectory_energy(simulate_baseline(b, vehicle, None, gains), eff, motor)
    assert e_b == pytest.approx(e_a, rel=1e-3)


def test_baseline_reaches_target(mission, vehicle):
    traj = simulate_baseline(mission, vehicle, None, BaselineGains())
    error = np.linalg.norm(traj.final_state[[0, 2, 4]] - mission.xf[[0, 2, 4]])
    assert error < 0.3


@pytest.mark.parametrize("e_baseline, e_optimal, expected, tol", [
    (5.77, 1.89, 67.24, 0.01),
    (9.74, 9.74 * (1 - 0.7885), 78.85, 0.05),
])
def test_savings_formula(e_baseline, e_optimal, expected, tol):
    assert savings_percent(e_baseline, e_optimal) == pytest.approx(expected, abs=tol)


def test_savings_needs_positive_baseline():
    with pytest.raises(DomainError):
        savings_percent(0.0, 1.0)


def test_compare_propagates_non_convergence(mission, vehicle):
    settings = SolverSettings(max_outer=1, max_inner=2)
    with pytest.raises(ConvergenceError) as info:
        compare_energy(mission, vehicle, None, 10, settings, BaselineGains())
    assert not info.value.result.converged


def test_coarse_compare(mission, vehicle):
    report = compare_energy(mission, vehicle, None, 20, SolverSettings(), BaselineGains())
    assert report.e_optimal <= report.e_baseline
    assert report.savings_percent == pytest.approx(
        100 * (report.e_baseline - report.e_optimal) / report.e_baseline)
    assert not report.baseline_error_exceeded
    summary = report.as_dict()
    assert summary["wind_enabled"] is False
    assert "feedforward" in summary["note"]
    assert len(summary["optimal"]["rotor_energy_J"]) == 4
    assert sum(report.optimal.rotor_energy) == pytest.approx(report.e_optimal)


@pytest.mark.slow
def test_open_loop_replay_reaches_target(mission, vehicle):
    result = TrajectoryPlanner(vehicle).plan(mission, n_intervals=100)
    assert result.converged
    flown = replay_plan(result.trajectory, mission, vehicle, None, "foh")
    np.testing.assert_allclose(flown.final_state[[0, 2, 4]], mission.xf[[0, 2, 4]], atol=5e-2)


@pytest.mark.slow
def test_compare_is_deterministic(mission, vehicle):
    first = compare_energy(mission, vehicle, None, 100, SolverSettings(), BaselineGains())
    second = compare_energy(mission, vehicle, None, 100, SolverSettings(), BaselineGains())
    assert first.as_dict() == second.as_dict()
    assert first.e_optimal <= first.e_baseline
