"""Deterministic wind: mean value, three harmonics and a periodic gust per axis."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from quadplan.errors import DomainError


@dataclass(frozen=True)
class WindAxisParams:
    """Wind description along one horizontal axis.

    ``harmonics`` holds three ``(Omega_k, A_k)`` pairs. ``Omega_k`` is used as
    the raw argument of ``sin(Omega_k * t)``; the tabulated values are labelled
    Hz in the source data but are applied without a 2*pi factor.
    """

    v0: float
    harmonics: Tuple[Tuple[float, float], ...]
    v_gmax: float
    T_g: float

    @property
    def omega_g(self) -> float:
        return 2.0 * np.pi / self.T_g

    def validate(self, prefix: str = "wind") -> None:
        pairs = self.harmonics if isinstance(self.harmonics, (tuple, list)) else ()
        if len(pairs) != 3 or any(not isinstance(pair, (tuple, list)) or len(pair) != 2
                                  for pair in pairs):
            raise DomainError(f"{prefix}.harmonics must hold exactly 3 (Omega, A) pairs")
        if not self.T_g > 0:
            raise DomainError(f"{prefix}.T_g must be positive, got {self.T_g}")
        values = [self.v0, self.v_gmax] + [v for pair in self.harmonics for v in pair]
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{prefix} entries must be finite")


@dataclass(frozen=True)
class WindModelParams:
    """Wind on the x and y axes; the vertical component is always zero.

    ``gain`` (1/s) turns the wind velocity into the acceleration disturbance
    seen by the translational dynamics.
    """

    x_axis: WindAxisParams
    y_axis: WindAxisParams
    gain: float = 1.0

    def validate(self) -> None:
        self.x_axis.validate("wind.x")
        self.y_axis.validate("wind.y")
        if not np.isfinite(self.gain):
            raise DomainError("wind.gain must be finite")


def calm_axis() -> WindAxisParams:
    return WindAxisParams(v0=0.0, harmonics=((1.0, 0.0),) * 3, v_gmax=0.0, T_g=1.0)


def gust(t, v_gmax: float, T_g: float):
    """Sigmoid-of-sine gust, peaking at ``v_gmax`` once per period ``T_g``."""
    if not T_g > 0:
        raise DomainError(f"gust period must be positive, got {T_g}")
    t = np.asarray(t, dtype=float)
    return 2.0 * v_gmax / (1.0 + np.exp(-4.0 * (np.sin(2.0 * np.pi * t / T_g) - 1.0)))


def axis_wind(t, p: WindAxisParams):
    """Wind speed along one axis at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    v = np.full_like(t, p.v0)
    for omega, amplitude in p.harmonics:
        v = v + amplitude * np.sin(omega * t)
    return v + gust(t, p.v_gmax, p.T_g)


def wind_vector(t, p: Optional[WindModelParams]) -> np.ndarray:
    """Wind velocity ``(vx, vy, 0)``; shape ``t.shape + (3,)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (3,))
    if p is None:
        return out
    out[..., 0] = axis_wind(t, p.x_axis)
    out[..., 1] = axis_wind(t, p.y_axis)
    return out


def wind_acceleration(t, p: Optional[WindModelParams]) -> np.ndarray:
    """Disturbance entering the acceleration channels of the dynamics."""
    if p is None:
        return wind_vector(t, None)
    return p.gain * wind_vector(t, p)
