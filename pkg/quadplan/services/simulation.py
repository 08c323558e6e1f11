"""Forward simulation, the baseline tracking controller and energy comparison."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from quadplan.errors import CascadeError, ConvergenceError, DivergenceError, DomainError
from quadplan.services.nlp_solver import KktReport, SolverSettings
from quadplan.services.power_energy import (
    BatteryTrace, battery_trace, rotor_energy, trajectory_energy,
)
from quadplan.services.quad_model import (
    N_CONTROLS, POSITION, ROTORS, AuxControl, Limits, QuadrotorParams,
    dynamics_rhs, mixing_matrix,
)
from quadplan.services.trajectory import Trajectory
from quadplan.services.transcription import MissionSpec, TrajectoryPlanner
from quadplan.services.vehicle import VehicleConfig
from quadplan.services.wind_field import WindModelParams, wind_acceleration

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
BASELINE_NOTE = ("baseline: cascaded PD tracking of a minimum-jerk reference, "
                 "pure feedback without wind feedforward")


def rk4_step(fn, t: float, x, h: float):
    """One classical fourth-order Runge-Kutta step of ``x' = fn(t, x)``."""
    k1 = fn(t, x)
    k2 = fn(t + h / 2, x + h / 2 * k1)
    k3 = fn(t + h / 2, x + h / 2 * k2)
    k4 = fn(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _control_array(value) -> np.ndarray:
    if isinstance(value, AuxControl):
        return value.as_array()
    return np.asarray(value, dtype=float)


def rk4_rollout(x_init, control: Callable, wind: Optional[WindModelParams],
                p: QuadrotorParams, limits: Limits, t0: float, tf: float,
                dt: float) -> Trajectory:
    """Integrate the closed loop at a fixed step.

    The control is evaluated at every Runge-Kutta stage; the value recorded
    for sample ``k`` is the one at ``(t_k, x_k)``. A control with a ``latch``
    method (see :class:`SampledController`) is latched at ``(t_k, x_k)`` only
    and its held value is used at the stages. Rotor speeds are clamped to
    ``[0, omega_max]`` after each step.

    Raises:
        DivergenceError: a state entry exceeded 1e6 in magnitude.
    """
    if not dt > 0:
        raise DomainError(f"rollout step must be positive, got {dt}")
    steps = max(1, int(round((tf - t0) / dt)))
    h = (tf - t0) / steps
    times = t0 + h * np.arange(steps + 1)
    states = np.empty((steps + 1, 16))
    controls = np.empty((steps + 1, N_CONTROLS))
    states[0] = x_init
    saturations = 0

    latch = getattr(control, "latch", None)
    stage = control.current if latch is not None else control
    record = latch if latch is not None else control

    def rhs(t, x):
        u = _control_array(stage(t, x))
        return dynamics_rhs(x, u, wind_acceleration(t, wind), p)

    for k in range(steps):
        x = states[k]
        controls[k] = _control_array(record(times[k], x))
        x_next = rk4_step(rhs, times[k], x, h)
        clamped = np.clip(x_next[ROTORS], 0.0, limits.omega_max)
        saturations += int(np.count_nonzero(clamped != x_next[ROTORS]))
        x_next[ROTORS] = clamped
        if not np.all(np.isfinite(x_next)) or np.any(np.abs(x_next) > DIVERGENCE_LIMIT):
            raise DivergenceError(f"state diverged at t={times[k + 1]:.4f} s")
        states[k + 1] = x_next
    controls[-1] = _control_array(record(times[-1], states[-1]))
    if saturations:
        logger.info("rollout clamped rotor speeds %d times", saturations)
    return Trajectory(times, states, controls)


class SampledController:
    """Zero-order hold of a controller at a fixed update period.

    Calling it updates the held value whenever ``t`` enters a new period.
    :func:`rk4_rollout` latches it once per step at ``(t_k, x_k)`` and reads
    :attr:`current` at the intermediate stages.
    """

    def __init__(self, controller: Callable, period: float, t0: float = 0.0):
        self.controller = controller
        self.period = period
        self.t0 = t0
        self._index = None
        self._value = None

    def latch(self, t: float, s) -> np.ndarray:
        index = int(np.floor((t - self.t0) / self.period + 1e-9))
        if index != self._index:
            self._index = index
            self._value = _control_array(self.controller(t, s))
        return self._value

    __call__ = latch

    def current(self, t: float, s) -> np.ndarray:
        if self._value is None:
            return self.latch(t, s)
        return self._value


class NodeControlHold:
    """Replays node controls between collocation nodes.

    ``mode`` is ``"zoh"`` (hold the left node value) or ``"foh"`` (linear
    interpolation between nodes).
    """

    def __init__(self, trajectory: Trajectory, mode: str = "zoh"):
        if mode not in ("zoh", "foh"):
            raise DomainError(f"hold mode must be 'zoh' or 'foh', got {mode!r}")
        self.times = trajectory.times
        self.controls = trajectory.controls
        self.mode = mode

    def __call__(self, t: float, s=None) -> np.ndarray:
        if self.mode == "foh":
            return np.array([np.interp(t, self.times, self.controls[:, j])
                             for j in range(N_CONTROLS)])
        k = int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1
        return self.controls[min(max(k, 0), len(self.times) - 1)]


@dataclass(frozen=True)
class BaselineGains:
    kp_pos: float = 2.0
    kd_pos: float = 2.5
    kp_att: float = 60.0
    kd_att: float = 15.0
    dt_ctrl: float = 0.01
    dt_sim: float = 0.001
    tilt_max: float = 0.6
    final_error_tol: float = 0.3

    def validate(self) -> None:
        for name in ("kp_pos", "kd_pos", "kp_att", "kd_att", "dt_ctrl", "dt_sim",
                     "tilt_max", "final_error_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"baseline.{name} must be positive")
        if self.kp_att < 25.0 * self.kp_pos:
            raise DomainError("baseline.kp_att must be at least 25 * baseline.kp_pos")


def minimum_jerk(t, t0: float, tf: float):
    """Quintic blend ``s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5`` and its time derivatives."""
    T = tf - t0
    tau = np.clip((t - t0) / T, 0.0, 1.0)
    s = 10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5
    ds = (30 * tau ** 2 - 60 * tau ** 3 + 30 * tau ** 4) / T
    dds = (60 * tau - 180 * tau ** 2 + 120 * tau ** 3) / T ** 2
    return s, ds, dds


def baseline_controller(t: float, s, mission: MissionSpec, gains: BaselineGains,
                        p: QuadrotorParams, limits: Limits) -> AuxControl:
    """Cascaded PD tracker of the minimum-jerk reference from ``x0`` to ``xf``.

    Raises:
        CascadeError: the outer loop asks for non-positive thrust.
    """
    s = np.asarray(s, dtype=float)
    blend, dblend, ddblend = minimum_jerk(t, mission.t0, mission.tf)
    delta = mission.xf[POSITION] - mission.x0[POSITION]
    pos_ref = mission.x0[POSITION] + blend * delta
    vel_ref = dblend * delta
    acc_ref = ddblend * delta
    yaw_ref = mission.x0[10] + blend * (mission.xf[10] - mission.x0[10])

    acc = (acc_ref + gains.kp_pos * (pos_ref - s[POSITION])
           + gains.kd_pos * (vel_ref - s[[1, 3, 5]]) + np.array([0.0, 0.0, p.g]))
    if acc[2] <= 0:
        raise CascadeError(f"desired thrust is not positive at t={t:.3f} s")
    norm = float(np.linalg.norm(acc))
    thrust = p.m * norm

    c_psi, s_psi = np.cos(yaw_ref), np.sin(yaw_ref)
    phi_d = np.arcsin(np.clip((acc[0] * s_psi - acc[1] * c_psi) / norm, -1.0, 1.0))
    theta_d = np.arctan2(acc[0] * c_psi + acc[1] * s_psi, acc[2])
    phi_d = np.clip(phi_d, -gains.tilt_max, gains.tilt_max)
    theta_d = np.clip(theta_d, -gains.tilt_max, gains.tilt_max)

    torques = np.array([
        p.Ix * (gains.kp_att * (phi_d - s[6]) - gains.kd_att * s[7]),
        p.Iy * (gains.kp_att * (theta_d - s[8]) - gains.kd_att * s[9]),
        p.Iz * (gains.kp_att * (yaw_ref - s[10]) - gains.kd_att * s[11]),
    ])
    w_sq = np.linalg.solve(mixing_matrix(p), np.concatenate([[thrust], torques]))
    w_des = np.sqrt(np.clip(w_sq, 0.0, limits.omega_max ** 2))
    alpha = np.clip((w_des - s[ROTORS]) / gains.dt_ctrl, -limits.alpha_max, limits.alpha_max)
    return AuxControl.from_array(alpha)


def simulate_baseline(mission: MissionSpec, vehicle: VehicleConfig,
                      wind: Optional[WindModelParams], gains: BaselineGains) -> Trajectory:
    """Closed-loop flight of the baseline tracker updated at ``gains.dt_ctrl``."""
    gains.validate()

    def control(t, s):
        return baseline_controller(t, s, mission, gains, vehicle.quad, vehicle.limits)

    sampled = SampledController(control, gains.dt_ctrl, mission.t0)
    return rk4_rollout(mission.x0, sampled, wind, vehicle.quad, vehicle.limits,
                       mission.t0, mission.tf, gains.dt_sim)


def replay_plan(plan: Trajectory, mission: MissionSpec, vehicle: VehicleConfig,
                wind: Optional[WindModelParams], mode: str = "zoh",
                substeps: int = 10) -> Trajectory:
    """Open-loop re-integration of planned node controls at ``h / substeps``."""
    h = float(plan.times[1] - plan.times[0])
    return rk4_rollout(mission.x0, NodeControlHold(plan, mode), wind, vehicle.quad,
                       vehicle.limits, mission.t0, mission.tf, h / substeps)


def savings_percent(e_baseline: float, e_optimal: float) -> float:
    """Energy saved relative to the baseline, in percent of the baseline."""
    if not e_baseline > 0:
        raise DomainError("baseline energy must be positive")
    return 100.0 * (e_baseline - e_optimal) / e_baseline


@dataclass
class EnergyLeg:
    """Energy accounting of one flown or planned trajectory."""

    trajectory: Trajectory
    energy: float
    rotor_energy: np.ndarray
    battery: BatteryTrace
    final_position_error: float
    final_state_error: float

    def summary(self) -> dict:
        return {
            "energy_J": self.energy,
            "rotor_energy_J": [float(e) for e in self.rotor_energy],
            "final_position_error_m": self.final_position_error,
            "final_state_error_max": self.final_state_error,
            "final_soc_pct": float(self.battery.soc[-1]),
            "min_v_bat_V": float(np.min(self.battery.v_bat)),
        }


@dataclass
class EnergyReport:
    e_optimal: float
    e_baseline: float
    savings_percent: float
    optimal: EnergyLeg
    baseline: EnergyLeg
    solver_status: str
    kkt: KktReport
    wind_enabled: bool
    baseline_error_exceeded: bool
    note: str = BASELINE_NOTE
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "note": self.note,
            "wind_enabled": self.wind_enabled,
            "e_optimal_J": self.e_optimal,
            "e_baseline_J": self.e_baseline,
            "savings_percent": self.savings_percent,
            "baseline_error_exceeded": self.baseline_error_exceeded,
            "solver": {"status": self.solver_status, **self.kkt.as_dict()},
            "optimal": self.optimal.summary(),
            "baseline": self.baseline.summary(),
            **self.extra,
        }


def evaluate_leg(traj: Trajectory, mission: MissionSpec, vehicle: VehicleConfig,
                 eff=None) -> EnergyLeg:
    eff = vehicle.efficiency if eff is None else eff
    final = traj.final_state
    return EnergyLeg(
        trajectory=traj,
        energy=trajectory_energy(traj, eff, vehicle.motor),
        rotor_energy=rotor_energy(traj, eff, vehicle.motor),
        battery=battery_trace(traj, eff, vehicle.motor, vehicle.battery),
        final_position_error=float(np.linalg.norm(final[POSITION] - mission.xf[POSITION])),
        final_state_error=float(np.max(np.abs(final - mission.xf))),
    )


def compare_energy(mission: MissionSpec, vehicle: VehicleConfig,
                   wind: Optional[WindModelParams], n_intervals: int,
                   settings: SolverSettings, gains: BaselineGains) -> EnergyReport:
    """Plan the minimum-energy trajectory, fly the baseline and compare energies.

    Both legs are measured with the same efficiency model.

    Raises:
        ConvergenceError: the planner did not converge.
    """
    planner = TrajectoryPlanner(vehicle, wind, settings)
    result = planner.plan(mission, n_intervals)
    if not result.converged:
        raise ConvergenceError(result)
    baseline_traj = simulate_baseline(mission, vehicle, wind, gains)

    optimal = evaluate_leg(result.trajectory, mission, vehicle)
    baseline = evaluate_leg(baseline_traj, mission, vehicle)
    exceeded = baseline.final_position_error > gains.final_error_tol
    if exceeded:
        logger.warning("baseline final position error %.3f m exceeds %.3f m",
                       baseline.final_position_error, gains.final_error_tol)
    report = EnergyReport(
        e_optimal=optimal.energy,
        e_baseline=baseline.energy,
        savings_percent=savings_percent(baseline.energy, optimal.energy),
        optimal=optimal,
        baseline=baseline,
        solver_status=result.status,
        kkt=result.kkt,
        wind_enabled=wind is not None,
        baseline_error_exceeded=exceeded,
    )
    logger.info("optimal %.1f J, baseline %.1f J, savings %.2f%%",
                report.e_optimal, report.e_baseline, report.savings_percent)
    return report
