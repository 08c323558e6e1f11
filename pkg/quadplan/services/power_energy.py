"""Motor, efficiency and battery models and the energy functional."""

import logging
from dataclasses import dataclass, fields
from typing import Iterator, NamedTuple, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import cumulative_trapezoid, trapezoid

from quadplan.errors import BatteryDepletedError, DomainError
from quadplan.services.trajectory import Trajectory

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class MotorParams:
    """Brushless motor treated as a DC motor without inductance."""

    R: float
    kt: float
    kv: float
    Ir: float
    kappa: float

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"motor.{f.name} must be positive, got {value}")


@dataclass(frozen=True)
class EfficiencySpec:
    """Drivetrain efficiency f_r(alpha, omega), clamped to [clamp_floor, 1].

    In polynomial mode ``poly_coeffs[i][j]`` multiplies ``alpha**i * omega**j``.
    """

    mode: str = "constant"
    constant_value: float = 1.0
    poly_coeffs: Tuple[Tuple[float, ...], ...] = ((1.0,),)
    clamp_floor: float = 0.05

    def validate(self) -> None:
        if self.mode not in ("constant", "polynomial"):
            raise DomainError(f"efficiency.mode must be 'constant' or 'polynomial', got {self.mode!r}")
        if not 0 < self.clamp_floor <= 1:
            raise DomainError("efficiency.clamp_floor must lie in (0, 1]")
        if self.mode == "constant" and not 0 < self.constant_value <= 1:
            raise DomainError("efficiency.constant_value must lie in (0, 1]")
        coeffs = np.asarray(self.poly_coeffs, dtype=float)
        if coeffs.ndim != 2 or not np.all(np.isfinite(coeffs)):
            raise DomainError("efficiency.poly_coeffs must be a finite matrix")

    def evaluate(self, a, w):
        """Efficiency and its partials ``(f, df/da, df/dw)``."""
        a = np.asarray(a, dtype=float)
        w = np.asarray(w, dtype=float)
        shape = np.broadcast_shapes(a.shape, w.shape)
        if self.mode == "constant":
            f = np.full(shape, min(max(self.constant_value, self.clamp_floor), 1.0))
            return f, np.zeros(shape), np.zeros(shape)
        a, w = np.broadcast_arrays(a, w)
        c = np.asarray(self.poly_coeffs, dtype=float)
        raw = P.polyval2d(a, w, c)
        inside = (raw > self.clamp_floor) & (raw < 1.0)
        f_a = np.where(inside, P.polyval2d(a, w, P.polyder(c, axis=0)), 0.0)
        f_w = np.where(inside, P.polyval2d(a, w, P.polyder(c, axis=1)), 0.0)
        return np.clip(raw, self.clamp_floor, 1.0), f_a, f_w


@dataclass(frozen=True)
class BatteryParams:
    """Equivalent single cell: capacity, resistance and discharge-curve fit."""

    Q_bat: float
    R_bat: float
    e0: float
    k: float
    c1: float
    c2: float

    def validate(self) -> None:
        if not self.Q_bat > 0:
            raise DomainError(f"battery.Q_bat must be positive, got {self.Q_bat}")
        if not self.R_bat >= 0:
            raise DomainError(f"battery.R_bat must be non-negative, got {self.R_bat}")


@dataclass(frozen=True)
class BatteryState:
    """Drawn charge (A*h), state of charge (%), terminal and open-circuit voltage (V)."""

    charge_drawn: float
    soc: float
    v_bat: float
    e_m: float


class MotorOperatingPoint(NamedTuple):
    torque: np.ndarray
    current: np.ndarray
    voltage: np.ndarray


@dataclass(frozen=True)
class BatteryTrace:
    """Battery quantities sampled on a trajectory grid."""

    times: np.ndarray
    current: np.ndarray
    charge_drawn: np.ndarray
    soc: np.ndarray
    v_bat: np.ndarray
    e_m: np.ndarray

    def states(self) -> Iterator[BatteryState]:
        for q, soc, v, e in zip(self.charge_drawn, self.soc, self.v_bat, self.e_m):
            yield BatteryState(float(q), float(soc), float(v), float(e))


def motor_steady_state(omega, omega_dot, p: MotorParams) -> MotorOperatingPoint:
    """Torque, current and voltage of a motor at speed ``omega`` accelerating at ``omega_dot``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise DomainError("rotor speed must be non-negative")
    if p.kt == 0:
        raise DomainError("motor.kt must be non-zero")
    torque = p.Ir * np.asarray(omega_dot, dtype=float) + p.kappa * omega ** 2
    current = torque / p.kt
    voltage = p.R * current + omega / p.kv
    return MotorOperatingPoint(torque, current, voltage)


def rotor_power(w, a, eff: EfficiencySpec, p: MotorParams) -> np.ndarray:
    """Per-rotor shaft power divided by efficiency, floored at zero (no regeneration)."""
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    f, _, _ = eff.evaluate(a, w)
    mech = (p.Ir * a + p.kappa * w ** 2) * w
    return np.maximum(mech / f, 0.0)


def power_integrand(w, a, eff: EfficiencySpec, p: MotorParams):
    """Total rotor power (W) for speeds ``w`` and accelerations ``a`` (last axis = rotor)."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("rotor speeds must be non-negative")
    return np.sum(rotor_power(w, a, eff, p), axis=-1)


def power_integrand_grad(w, a, eff: EfficiencySpec, p: MotorParams):
    """Partials of :func:`power_integrand` with respect to each ``w_j`` and ``a_j``."""
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    f, f_a, f_w = eff.evaluate(a, w)
    mech = (p.Ir * a + p.kappa * w ** 2) * w
    d_w = (p.Ir * a + 3.0 * p.kappa * w ** 2) / f - mech * f_w / f ** 2
    d_a = p.Ir * w / f - mech * f_a / f ** 2
    delivering = mech > 0
    return np.where(delivering, d_w, 0.0), np.where(delivering, d_a, 0.0)


def _power_samples(traj: Trajectory, eff: EfficiencySpec, p: MotorParams) -> np.ndarray:
    traj.require_increasing()
    return power_integrand(traj.rotor_speeds, traj.controls, eff, p)


def trajectory_energy(traj: Trajectory, eff: EfficiencySpec, p: MotorParams) -> float:
    """Energy (J) consumed along a trajectory, by trapezoidal quadrature."""
    return float(trapezoid(_power_samples(traj, eff, p), traj.times))


def cumulative_energy(traj: Trajectory, eff: EfficiencySpec, p: MotorParams):
    """Instantaneous power and running energy at each sample."""
    power = _power_samples(traj, eff, p)
    return power, cumulative_trapezoid(power, traj.times, initial=0.0)


def rotor_energy(traj: Trajectory, eff: EfficiencySpec, p: MotorParams) -> np.ndarray:
    """Energy (J) attributed to each of the four rotors."""
    traj.require_increasing()
    per_rotor = rotor_power(traj.rotor_speeds, traj.controls, eff, p)
    return trapezoid(per_rotor, traj.times, axis=0)


def open_circuit_voltage(charge_drawn, p: BatteryParams):
    """Open-circuit voltage after drawing ``charge_drawn`` A*h."""
    q = np.asarray(charge_drawn, dtype=float)
    return p.e0 - p.k * p.Q_bat / (p.Q_bat - q) + p.c1 * np.exp(-p.c2 * q)


def fresh_battery(p: BatteryParams, i_bat: float = 0.0) -> BatteryState:
    e_m = float(open_circuit_voltage(0.0, p))
    return BatteryState(charge_drawn=0.0, soc=100.0, v_bat=e_m - p.R_bat * i_bat, e_m=e_m)


def battery_state(charge_drawn: float, i_bat: float, p: BatteryParams) -> BatteryState:
    if charge_drawn >= p.Q_bat:
        raise BatteryDepletedError(
            f"drawn charge {charge_drawn:.6g} A*h reaches capacity {p.Q_bat} A*h")
    e_m = float(open_circuit_voltage(charge_drawn, p))
    return BatteryState(
        charge_drawn=charge_drawn,
        soc=100.0 * (1.0 - charge_drawn / p.Q_bat),
        v_bat=e_m - p.R_bat * i_bat,
        e_m=e_m,
    )


def battery_step(bs: BatteryState, i_bat: float, dt: float, p: BatteryParams) -> BatteryState:
    """Advance the cell by ``dt`` seconds at pack current ``i_bat``."""
    if not dt > 0:
        raise DomainError(f"battery step must be positive, got {dt}")
    return battery_state(bs.charge_drawn + i_bat * dt / SECONDS_PER_HOUR, i_bat, p)


def pack_current(traj: Trajectory, motor: MotorParams) -> np.ndarray:
    """Sum of the four motor currents at each sample, each floored at zero."""
    op = motor_steady_state(traj.rotor_speeds, traj.controls, motor)
    return np.sum(np.maximum(op.current, 0.0), axis=-1)


def battery_trace(traj: Trajectory, eff: EfficiencySpec, motor: MotorParams,
                  battery: BatteryParams) -> BatteryTrace:
    """Battery response to the motor currents drawn along a trajectory.

    Currents come from the motor model alone; ``eff`` does not enter them.
    """
    traj.require_increasing()
    current = pack_current(traj, motor)
    state = fresh_battery(battery, float(current[0]))
    states = [state]
    for k, dt in enumerate(np.diff(traj.times)):
        mean_current = 0.5 * (current[k] + current[k + 1])
        state = battery_step(state, mean_current, float(dt), battery)
        state = BatteryState(state.charge_drawn, state.soc,
                             state.e_m - battery.R_bat * current[k + 1], state.e_m)
        states.append(state)
    logger.debug("battery trace: %d samples, final soc %.4f%%", len(states), states[-1].soc)
    return BatteryTrace(
        times=traj.times,
        current=current,
        charge_drawn=np.array([s.charge_drawn for s in states]),
        soc=np.array([s.soc for s in states]),
        v_bat=np.array([s.v_bat for s in states]),
        e_m=np.array([s.e_m for s in states]),
    )
