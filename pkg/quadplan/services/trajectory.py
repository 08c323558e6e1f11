"""Time-stamped state/control samples shared by planner, simulator and writers."""

from dataclasses import dataclass

import numpy as np

from quadplan.errors import DomainError
from quadplan.services.quad_model import N_CONTROLS, N_STATES, AuxControl, State16


@dataclass(frozen=True)
class Trajectory:
    """Samples ``(t_k, x_k, u_k)``; arrays shaped (N,), (N, nx), (N, nu).

    Any state and control widths are accepted; quadrotor-only views
    (rotor speeds, named samples) check for the 16-state, 4-control layout.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        n = times.shape[0] if times.ndim == 1 else -1
        if n < 0 or states.ndim != 2 or controls.ndim != 2 \
                or states.shape[0] != n or controls.shape[0] != n:
            raise DomainError(
                f"trajectory arrays disagree: times {times.shape}, "
                f"states {states.shape}, controls {controls.shape}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def is_quadrotor(self) -> bool:
        return self.states.shape[1] == N_STATES and self.controls.shape[1] == N_CONTROLS

    def require_quadrotor(self) -> None:
        if not self.is_quadrotor:
            raise DomainError(
                f"expected {N_STATES} states and {N_CONTROLS} controls per sample, got "
                f"{self.states.shape[1]} and {self.controls.shape[1]}")

    @property
    def rotor_speeds(self) -> np.ndarray:
        self.require_quadrotor()
        return self.states[:, 12:16]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def require_increasing(self) -> None:
        if len(self) < 2:
            raise DomainError("trajectory needs at least two samples")
        if not np.all(np.diff(self.times) > 0):
            raise DomainError("trajectory timestamps must be strictly increasing")

    def sample(self, k: int):
        """Sample ``k`` as ``(t, State16, AuxControl)``."""
        self.require_quadrotor()
        return (float(self.times[k]), State16.from_array(self.states[k]),
                AuxControl.from_array(self.controls[k]))

    def concatenate(self, other: "Trajectory") -> "Trajectory":
        """Join two trajectories sharing the boundary sample."""
        if not np.isclose(other.times[0], self.times[-1]):
            raise DomainError("trajectories do not meet at a common sample")
        return Trajectory(
            np.concatenate([self.times, other.times[1:]]),
            np.vstack([self.states, other.states[1:]]),
            np.vstack([self.controls, other.controls[1:]]),
        )
