"""Quadrotor rigid-body dynamics in dynamic-extension form.

The state is the 16-vector ``[x, xdot, y, ydot, z, zdot, phi, phidot, theta,
thetadot, psi, psidot, w1, w2, w3, w4]`` and the control is the vector of the
four rotor angular accelerations. Euler angles follow the Z-Y-X convention and
rotor numbering follows the mixing signs of the thrust/torque map verbatim.

All functions broadcast over leading axes, so a whole collocation grid of
shape ``(N, 16)`` can be evaluated in one call.
"""

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from quadplan.errors import DomainError

STATE_NAMES = (
    "x", "xdot", "y", "ydot", "z", "zdot",
    "phi", "phidot", "theta", "thetadot", "psi", "psidot",
    "w1", "w2", "w3", "w4",
)
CONTROL_NAMES = ("a1", "a2", "a3", "a4")

N_STATES = 16
N_CONTROLS = 4

POSITION = np.array([0, 2, 4])
VELOCITY = np.array([1, 3, 5])
ANGLES = np.array([6, 8, 10])
RATES = np.array([7, 9, 11])
ROTORS = np.arange(12, 16)

# Sign pattern of the rotor-speed imbalance (w1 - w2 + w3 - w4).
SPIN = np.array([1.0, -1.0, 1.0, -1.0])


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical parameters of the airframe and propellers."""

    m: float
    l: float
    Ix: float
    Iy: float
    Iz: float
    Ir: float
    kappa_b: float
    kappa: float
    g: float = 9.81

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"vehicle.{f.name} must be positive, got {value}")
        Ix, Iy, Iz = self.Ix, self.Iy, self.Iz
        if Ix > Iy + Iz or Iy > Ix + Iz or Iz > Ix + Iy:
            raise DomainError("vehicle inertias violate the triangle inequality")


@dataclass(frozen=True)
class Limits:
    """Actuator and attitude bounds of the planning problem.

    ``T_max`` is derived from the rotor speed limit; build instances with
    :meth:`for_vehicle` so the two stay consistent.
    """

    omega_max: float
    alpha_max: float
    u_max: float
    T_max: float
    angle_max: float = np.pi / 2
    v_max: float = 10.0
    rate_max: float = 6.0

    @classmethod
    def for_vehicle(cls, params: QuadrotorParams, omega_max: float, alpha_max: float,
                    u_max: float, angle_max: float = np.pi / 2, v_max: float = 10.0,
                    rate_max: float = 6.0) -> "Limits":
        return cls(
            omega_max=omega_max,
            alpha_max=alpha_max,
            u_max=u_max,
            T_max=4.0 * params.kappa_b * omega_max ** 2,
            angle_max=angle_max,
            v_max=v_max,
            rate_max=rate_max,
        )

    def validate(self, params: QuadrotorParams) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"limits.{f.name} must be positive, got {value}")
        if self.T_max != 4.0 * params.kappa_b * self.omega_max ** 2:
            raise DomainError("limits.T_max must equal 4*kappa_b*omega_max**2")


@dataclass(frozen=True)
class State16:
    """Named view of the dynamic-extension state."""

    x: float = 0.0
    xdot: float = 0.0
    y: float = 0.0
    ydot: float = 0.0
    z: float = 0.0
    zdot: float = 0.0
    phi: float = 0.0
    phidot: float = 0.0
    theta: float = 0.0
    thetadot: float = 0.0
    psi: float = 0.0
    psidot: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    w3: float = 0.0
    w4: float = 0.0

    @classmethod
    def from_array(cls, values) -> "State16":
        values = np.asarray(values, dtype=float)
        if values.shape != (N_STATES,):
            raise DomainError(f"state must have {N_STATES} entries, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STATE_NAMES])

    def validate(self, limits: Limits) -> None:
        check_state(self.as_array(), limits)


@dataclass(frozen=True)
class AuxControl:
    """Rotor angular accelerations (rad/s^2)."""

    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0

    @classmethod
    def from_array(cls, values) -> "AuxControl":
        values = np.asarray(values, dtype=float)
        if values.shape != (N_CONTROLS,):
            raise DomainError(f"control must have {N_CONTROLS} entries, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4])

    def validate(self, limits: Limits) -> None:
        a = self.as_array()
        if not np.all(np.isfinite(a)):
            raise DomainError("control entries must be finite")
        if np.any(np.abs(a) > limits.alpha_max):
            raise DomainError(f"rotor acceleration exceeds alpha_max={limits.alpha_max}")


class Wrench(NamedTuple):
    """Total thrust (N) and roll/pitch/yaw torques (N*m)."""

    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u4: np.ndarray


def check_state(state: np.ndarray, limits: Limits) -> None:
    """Raise DomainError if a state vector lies outside the limit box."""
    state = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(state)):
        raise DomainError("state entries must be finite")
    if abs(state[6]) > limits.angle_max or abs(state[8]) > limits.angle_max:
        raise DomainError(f"roll/pitch exceed angle_max={limits.angle_max}")
    w = state[ROTORS]
    if np.any(w < 0) or np.any(w > limits.omega_max):
        raise DomainError(f"rotor speeds must lie in [0, {limits.omega_max}]")


def mixing_matrix(p: QuadrotorParams) -> np.ndarray:
    """Linear map from squared rotor speeds to the wrench."""
    kb, l, k = p.kappa_b, p.l, p.kappa
    return np.array([
        [kb, kb, kb, kb],
        [0.0, l * kb, 0.0, -l * kb],
        [-l * kb, 0.0, l * kb, 0.0],
        [k, -k, k, -k],
    ])


def control_map(w, p: QuadrotorParams, check: bool = True) -> Wrench:
    """Thrust and body torques produced by four rotor speeds.

    Args:
        w: Rotor speeds (rad/s), shape ``(..., 4)``.
        p: Vehicle parameters.
        check: Reject negative speeds.

    Returns:
        Wrench with entries shaped like ``w[..., 0]``.
    """
    w = np.asarray(w, dtype=float)
    if check and np.any(w < 0):
        raise DomainError("rotor speeds must be non-negative")
    sq = w ** 2
    u = sq @ mixing_matrix(p).T
    return Wrench(u[..., 0], u[..., 1], u[..., 2], u[..., 3])


def hover_speed(p: QuadrotorParams) -> float:
    """Rotor speed at which total thrust balances weight."""
    return float(np.sqrt(p.m * p.g / (4.0 * p.kappa_b)))


def hover_state(p: QuadrotorParams, position=(0.0, 0.0, 0.0), yaw: float = 0.0) -> np.ndarray:
    """Hover equilibrium at a given position and heading."""
    s = np.zeros(N_STATES)
    s[POSITION] = position
    s[10] = yaw
    s[ROTORS] = hover_speed(p)
    return s


def dynamics_rhs(s, u, wind, p: QuadrotorParams) -> np.ndarray:
    """Time derivative of the dynamic-extension state.

    Args:
        s: States, shape ``(..., 16)``.
        u: Rotor accelerations, shape ``(..., 4)``.
        wind: Acceleration disturbance added to the x/y/z channels, shape ``(..., 3)``.
        p: Vehicle parameters.

    Returns:
        Array shaped like ``s``.
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    wind = np.broadcast_to(np.asarray(wind, dtype=float), s.shape[:-1] + (3,))

    phi, theta, psi = s[..., 6], s[..., 8], s[..., 10]
    dphi, dtheta, dpsi = s[..., 7], s[..., 9], s[..., 11]
    w = s[..., 12:16]
    u1, u2, u3, u4 = control_map(w, p, check=False)
    varpi = w @ SPIN

    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)

    ds = np.empty(np.broadcast_shapes(s.shape, u.shape[:-1] + (N_STATES,)))
    ds[..., 0] = s[..., 1]
    ds[..., 2] = s[..., 3]
    ds[..., 4] = s[..., 5]
    ds[..., 1] = (cphi * sth * cpsi + sphi * spsi) * u1 / p.m + wind[..., 0]
    ds[..., 3] = (cphi * sth * spsi - sphi * cpsi) * u1 / p.m + wind[..., 1]
    ds[..., 5] = cphi * cth * u1 / p.m - p.g + wind[..., 2]
    ds[..., 6] = dphi
    ds[..., 8] = dtheta
    ds[..., 10] = dpsi
    ds[..., 7] = ((p.Iy - p.Iz) * dtheta * dpsi + p.Ir * dtheta * varpi + u2) / p.Ix
    ds[..., 9] = ((p.Iz - p.Ix) * dphi * dpsi - p.Ir * dphi * varpi + u3) / p.Iy
    ds[..., 11] = ((p.Ix - p.Iy) * dphi * dtheta + u4) / p.Iz
    ds[..., 12:16] = u
    return ds


def dynamics_jacobian(s, u, p: QuadrotorParams):
    """Analytic partial derivatives of :func:`dynamics_rhs`.

    The wind term does not depend on state or control and drops out.

    Returns:
        ``(dfdx, dfdu)`` with shapes ``(..., 16, 16)`` and ``(..., 16, 4)``.
    """
    s = np.asarray(s, dtype=float)
    lead = s.shape[:-1]
    phi, theta, psi = s[..., 6], s[..., 8], s[..., 10]
    dphi, dtheta, dpsi = s[..., 7], s[..., 9], s[..., 11]
    w = s[..., 12:16]
    u1 = p.kappa_b * np.sum(w ** 2, axis=-1)
    varpi = w @ SPIN

    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)

    fx = cphi * sth * cpsi + sphi * spsi
    fy = cphi * sth * spsi - sphi * cpsi
    fz = cphi * cth

    J = np.zeros(lead + (N_STATES, N_STATES))
    J[..., 0, 1] = 1.0
    J[..., 2, 3] = 1.0
    J[..., 4, 5] = 1.0
    J[..., 6, 7] = 1.0
    J[..., 8, 9] = 1.0
    J[..., 10, 11] = 1.0

    du1 = 2.0 * p.kappa_b * w
    J[..., 1, 6] = (-sphi * sth * cpsi + cphi * spsi) * u1 / p.m
    J[..., 1, 8] = cphi * cth * cpsi * u1 / p.m
    J[..., 1, 10] = (-cphi * sth * spsi + sphi * cpsi) * u1 / p.m
    J[..., 1, 12:16] = fx[..., None] * du1 / p.m

    J[..., 3, 6] = (-sphi * sth * spsi - cphi * cpsi) * u1 / p.m
    J[..., 3, 8] = cphi * cth * spsi * u1 / p.m
    J[..., 3, 10] = fx * u1 / p.m
    J[..., 3, 12:16] = fy[..., None] * du1 / p.m

    J[..., 5, 6] = -sphi * cth * u1 / p.m
    J[..., 5, 8] = -cphi * sth * u1 / p.m
    J[..., 5, 12:16] = fz[..., None] * du1 / p.m

    lkb2 = 2.0 * p.l * p.kappa_b
    zero = np.zeros_like(phi)

    J[..., 7, 9] = ((p.Iy - p.Iz) * dpsi + p.Ir * varpi) / p.Ix
    J[..., 7, 11] = (p.Iy - p.Iz) * dtheta / p.Ix
    du2 = np.stack([zero, lkb2 * w[..., 1], zero, -lkb2 * w[..., 3]], axis=-1)
    J[..., 7, 12:16] = (p.Ir * dtheta[..., None] * SPIN + du2) / p.Ix

    J[..., 9, 7] = ((p.Iz - p.Ix) * dpsi - p.Ir * varpi) / p.Iy
    J[..., 9, 11] = (p.Iz - p.Ix) * dphi / p.Iy
    du3 = np.stack([-lkb2 * w[..., 0], zero, lkb2 * w[..., 2], zero], axis=-1)
    J[..., 9, 12:16] = (-p.Ir * dphi[..., None] * SPIN + du3) / p.Iy

    J[..., 11, 7] = (p.Ix - p.Iy) * dtheta / p.Iz
    J[..., 11, 9] = (p.Ix - p.Iy) * dphi / p.Iz
    J[..., 11, 12:16] = 2.0 * p.kappa * SPIN * w / p.Iz

    B = np.zeros(lead + (N_STATES, N_CONTROLS))
    B[..., 12:16, :] = np.eye(N_CONTROLS)
    return J, B
