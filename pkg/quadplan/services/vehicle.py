"""Bundle of every physical parameter set describing one aircraft."""

from dataclasses import dataclass

from quadplan.services.power_energy import BatteryParams, EfficiencySpec, MotorParams
from quadplan.services.quad_model import Limits, QuadrotorParams


@dataclass(frozen=True)
class VehicleConfig:
    quad: QuadrotorParams
    motor: MotorParams
    battery: BatteryParams
    limits: Limits
    efficiency: EfficiencySpec

    def validate(self) -> None:
        self.quad.validate()
        self.motor.validate()
        self.battery.validate()
        self.limits.validate(self.quad)
        self.efficiency.validate()
