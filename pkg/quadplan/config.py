"""Run configuration: built-in Phantom 2 defaults and the key/value file loader.

A configuration file holds ``section.key = value`` lines (``#`` starts a
comment). Values are numbers, JSON lists, ``on``/``off`` or bare words. Every
key in the file overrides one default; unknown keys are rejected.
"""

import json
import logging
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from dotenv import dotenv_values

from quadplan.errors import ConfigError
from quadplan.services.nlp_solver import SolverSettings
from quadplan.services.power_energy import BatteryParams, EfficiencySpec, MotorParams
from quadplan.services.quad_model import Limits, QuadrotorParams, hover_state
from quadplan.services.simulation import BaselineGains
from quadplan.services.transcription import CollocationGrid, MissionSpec
from quadplan.services.vehicle import VehicleConfig
from quadplan.services.wind_field import WindAxisParams, WindModelParams

logger = logging.getLogger(__name__)
SETTING_LINE = re.compile(r"^[A-Za-z_][\w.]*\s*=")

# Phantom 2 airframe
VEHICLE_MASS = 1.3
ARM_LENGTH = 0.175
INERTIA_X = 0.081
INERTIA_Y = 0.081
INERTIA_Z = 0.142
ROTOR_INERTIA = 4.1904e-5
THRUST_COEFF = 3.8305e-6
DRAG_COEFF = 2.2518e-8
GRAVITY = 9.81

# Motor and battery
MOTOR_RESISTANCE = 0.2
MOTOR_TORQUE_CONSTANT = 0.0104
MOTOR_SPEED_CONSTANT = 96.342
BATTERY_CAPACITY_AH = 1.55
BATTERY_RESISTANCE = 0.02
BATTERY_E0 = 1.24
BATTERY_K = 2.92e-3
BATTERY_C1 = 0.156
BATTERY_C2 = 2.35

# Wind
WIND_X_MEAN = 1.0
WIND_X_HARMONICS = ((0.5, 0.10), (0.7, 0.25), (1.0, 0.30))
WIND_Y_MEAN = 0.5
WIND_Y_HARMONICS = ((0.6, -0.05), (1.0, -0.10), (1.5, -0.30))
GUST_PEAK = 0.2
GUST_PERIOD = 10.0

ON_WORDS = ("on", "true", "yes", "1")
OFF_WORDS = ("off", "false", "no", "0")


@dataclass(frozen=True)
class MotorSettings:
    """Electrical motor constants; rotor inertia and drag come from ``vehicle``."""

    R: float = MOTOR_RESISTANCE
    kt: float = MOTOR_TORQUE_CONSTANT
    kv: float = MOTOR_SPEED_CONSTANT


@dataclass(frozen=True)
class LimitSettings:
    omega_max: float = 1200.0
    alpha_max: float = 4000.0
    u_max: float = 0.5
    angle_max: float = float(np.pi / 2)
    v_max: float = 10.0
    rate_max: float = 6.0


@dataclass(frozen=True)
class MissionSettings:
    """Hover-to-hover transfer between two positions."""

    x0_position: Tuple[float, ...] = field(default=(0.0, 0.0, 0.0), metadata={"key": "x0.position"})
    x0_yaw: float = field(default=0.0, metadata={"key": "x0.yaw"})
    xf_position: Tuple[float, ...] = field(default=(6.0, 7.0, 8.0), metadata={"key": "xf.position"})
    xf_yaw: float = field(default=0.0, metadata={"key": "xf.yaw"})
    t0: float = 0.0
    tf: float = 10.0

    def validate(self) -> None:
        for name in ("x0_position", "xf_position"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"mission.{name.replace('_', '.')}", "needs exactly 3 entries")


@dataclass(frozen=True)
class WindSettings:
    enabled: bool = False
    gain: float = 1.0
    x_v0: float = field(default=WIND_X_MEAN, metadata={"key": "x.v0"})
    x_harmonics: Tuple[Tuple[float, ...], ...] = field(
        default=WIND_X_HARMONICS, metadata={"key": "x.harmonics"})
    x_v_gmax: float = field(default=GUST_PEAK, metadata={"key": "x.v_gmax"})
    x_T_g: float = field(default=GUST_PERIOD, metadata={"key": "x.T_g"})
    y_v0: float = field(default=WIND_Y_MEAN, metadata={"key": "y.v0"})
    y_harmonics: Tuple[Tuple[float, ...], ...] = field(
        default=WIND_Y_HARMONICS, metadata={"key": "y.harmonics"})
    y_v_gmax: float = field(default=GUST_PEAK, metadata={"key": "y.v_gmax"})
    y_T_g: float = field(default=GUST_PERIOD, metadata={"key": "y.T_g"})

    def model(self) -> WindModelParams:
        """Wind model described by this section, whether or not it is enabled."""
        return WindModelParams(
            x_axis=WindAxisParams(self.x_v0, self.x_harmonics, self.x_v_gmax, self.x_T_g),
            y_axis=WindAxisParams(self.y_v0, self.y_harmonics, self.y_v_gmax, self.y_T_g),
            gain=self.gain,
        )


@dataclass(frozen=True)
class GridSettings:
    n_intervals: int = 100
    hold: str = "zoh"

    def validate(self) -> None:
        if self.hold not in ("zoh", "foh"):
            raise ConfigError("grid.hold", f"must be 'zoh' or 'foh', got {self.hold!r}")


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    sample_rate: float = 20.0

    def validate(self) -> None:
        if not self.sample_rate > 0:
            raise ConfigError("outputs.sample_rate", "must be positive")


@dataclass(frozen=True)
class RunConfig:
    vehicle: QuadrotorParams = field(default_factory=lambda: QuadrotorParams(
        m=VEHICLE_MASS, l=ARM_LENGTH, Ix=INERTIA_X, Iy=INERTIA_Y, Iz=INERTIA_Z,
        Ir=ROTOR_INERTIA, kappa_b=THRUST_COEFF, kappa=DRAG_COEFF, g=GRAVITY))
    motor: MotorSettings = field(default_factory=MotorSettings)
    battery: BatteryParams = field(default_factory=lambda: BatteryParams(
        Q_bat=BATTERY_CAPACITY_AH, R_bat=BATTERY_RESISTANCE, e0=BATTERY_E0,
        k=BATTERY_K, c1=BATTERY_C1, c2=BATTERY_C2))
    efficiency: EfficiencySpec = field(default_factory=EfficiencySpec)
    limits: LimitSettings = field(default_factory=LimitSettings)
    mission: MissionSettings = field(default_factory=MissionSettings)
    wind: WindSettings = field(default_factory=WindSettings)
    grid: GridSettings = field(default_factory=GridSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    baseline: BaselineGains = field(default_factory=BaselineGains)
    outputs: OutputSettings = field(default_factory=OutputSettings)

    def motor_params(self) -> MotorParams:
        return MotorParams(R=self.motor.R, kt=self.motor.kt, kv=self.motor.kv,
                           Ir=self.vehicle.Ir, kappa=self.vehicle.kappa)

    def limit_params(self) -> Limits:
        lim = self.limits
        return Limits.for_vehicle(self.vehicle, lim.omega_max, lim.alpha_max, lim.u_max,
                                  angle_max=lim.angle_max, v_max=lim.v_max,
                                  rate_max=lim.rate_max)

    def vehicle_config(self) -> VehicleConfig:
        return VehicleConfig(self.vehicle, self.motor_params(), self.battery,
                             self.limit_params(), self.efficiency)

    def mission_spec(self) -> MissionSpec:
        ms = self.mission
        return MissionSpec(
            x0=hover_state(self.vehicle, ms.x0_position, ms.x0_yaw),
            xf=hover_state(self.vehicle, ms.xf_position, ms.xf_yaw),
            t0=ms.t0,
            tf=ms.tf,
        )

    def wind_model(self) -> Optional[WindModelParams]:
        """Wind seen by the planner and the simulations; ``None`` when disabled."""
        return self.wind.model() if self.wind.enabled else None

    def validate(self) -> None:
        """Check every section; errors name the offending key path."""
        checks = (
            ("vehicle", self.vehicle.validate),
            ("motor", lambda: self.motor_params().validate()),
            ("battery", self.battery.validate),
            ("efficiency", self.efficiency.validate),
            ("limits", lambda: self.limit_params().validate(self.vehicle)),
            ("mission", self.mission.validate),
            ("mission", lambda: self.mission_spec().validate(self.limit_params())),
            ("wind", lambda: self.wind.model().validate()),
            ("grid", self.grid.validate),
            ("grid", lambda: CollocationGrid(self.grid.n_intervals, self.mission.t0,
                                             self.mission.tf).validate()),
            ("solver", self.solver.validate),
            ("baseline", self.baseline.validate),
            ("outputs", self.outputs.validate),
        )
        for section, check in checks:
            try:
                check()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(section, str(exc)) from exc


SECTIONS = tuple(f.name for f in fields(RunConfig))


def _key(section: str, f) -> str:
    return f"{section}.{f.metadata.get('key', f.name)}"


def config_items(cfg: RunConfig):
    """``(key, value)`` pairs of every setting, in file order."""
    for section in SECTIONS:
        block = getattr(cfg, section)
        for f in fields(block):
            yield _key(section, f), getattr(block, f.name)


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"not a number: {value!r}")
    return float(value)


def parse_value(key: str, text, current):
    """Convert ``text`` to the type of the value it replaces."""
    if text is None:
        raise ConfigError(key, "missing value")
    text = str(text).strip()
    try:
        if isinstance(current, bool):
            word = text.lower()
            if word in ON_WORDS:
                return True
            if word in OFF_WORDS:
                return False
            raise ValueError(f"expected on/off, got {text!r}")
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            value = _tupled(json.loads(text))
            if not isinstance(value, tuple):
                raise ValueError("expected a JSON list")
            return value
        return text
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {text!r}: {exc}") from exc


def format_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return json.dumps(value)
    return str(value)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Copy of ``cfg`` with ``{"section.key": text}`` entries applied and validated."""
    known = {}
    for section in SECTIONS:
        for f in fields(getattr(cfg, section)):
            known[_key(section, f)] = (section, f.name)

    changes = {}
    for key, text in overrides.items():
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
        section, name = known[key]
        value = parse_value(key, text, getattr(getattr(cfg, section), name))
        changes.setdefault(section, {})[name] = value
        logger.info("override %s = %s", key, format_value(value))

    try:
        updated = {section: replace(getattr(cfg, section), **values)
                   for section, values in changes.items()}
    except ValueError as exc:
        raise ConfigError(next(iter(changes)), str(exc)) from exc
    result = replace(cfg, **updated)
    result.validate()
    return result


def check_lines(path) -> None:
    """Reject lines that are neither blank, comments nor `section.key = value`."""
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            text = line.strip()
            if text and not text.startswith("#") and not SETTING_LINE.match(text):
                raise ConfigError(f"line {number}",
                                  f"expected 'section.key = value', got {text!r}")


def load_config(path=None) -> RunConfig:
    """Read a configuration file over the built-in defaults.

    Raises:
        ConfigError: missing file, unknown key, unparsable value or invalid setting.
    """
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    if not os.path.isfile(path):
        raise ConfigError("config", f"file not found: {path}")
    check_lines(path)
    raw = dotenv_values(path, interpolate=False)
    logger.debug("read %d entries from %s", len(raw), path)
    return apply_overrides(RunConfig(), raw)


def dump_config(cfg: RunConfig, path) -> Path:
    """Write every setting of ``cfg`` in the format :func:`load_config` reads."""
    lines = []
    current = None
    for key, value in config_items(cfg):
        section = key.split(".", 1)[0]
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"# {section}")
            current = section
        lines.append(f"{key} = {format_value(value)}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
