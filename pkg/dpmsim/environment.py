import bisect
import enum
import math
from dataclasses import dataclass, replace
from typing import Tuple

from .types import ConfigInvalid


class NegativeEnergy(ValueError):
    pass


class UnstableStep(ValueError):
    pass


class BatterySource(enum.Enum):
    ON_BATTERY = "OnBattery"
    POWER_SUPPLY = "PowerSupply"


class BatteryClass(enum.Enum):
    EMPTY = "E"
    LOW = "L"
    MEDIUM = "M"
    HIGH = "H"
    FULL = "F"
    POWER_SUPPLY = "PS"


class TempClass(enum.Enum):
    LOW = "L"
    MEDIUM = "M"
    HIGH = "H"


_BATTERY_BANDS = (
    BatteryClass.EMPTY,
    BatteryClass.LOW,
    BatteryClass.MEDIUM,
    BatteryClass.HIGH,
    BatteryClass.FULL,
)
_TEMP_BANDS = (TempClass.LOW, TempClass.MEDIUM, TempClass.HIGH)


@dataclass(frozen=True)
class Battery:
    capacity: float  # joules
    charge: float  # joules
    source: BatterySource = BatterySource.ON_BATTERY


@dataclass(frozen=True)
class ThermalNode:
    temperature: float  # degC
    ambient: float = 25.0  # degC
    r_th: float = 20.0  # K/W
    c_th: float = 1e-3  # J/K
    fan_on: bool = False
    fan_factor: float = 0.5

    @property
    def r_th_eff(self) -> float:
        return self.r_th * self.fan_factor if self.fan_on else self.r_th

    @property
    def max_step(self) -> float:
        return self.c_th * self.r_th_eff / 2


@dataclass(frozen=True)
class ClassThresholds:
    battery_bounds: Tuple[float, float, float, float] = (0.05, 0.25, 0.50, 0.80)
    temp_bounds: Tuple[float, float] = (60.0, 85.0)


def validate_environment(
    battery: Battery, node: ThermalNode, thresholds: ClassThresholds
) -> None:
    if battery.capacity <= 0:
        raise ConfigInvalid("environment.battery.capacity: must be > 0")
    if not (0 <= battery.charge <= battery.capacity):
        raise ConfigInvalid("environment.battery.charge: must be in [0, capacity]")
    if node.r_th <= 0 or node.c_th <= 0:
        raise ConfigInvalid("environment.thermal: r_th and c_th must be > 0")
    if node.temperature < node.ambient:
        raise ConfigInvalid(
            f"environment.thermal.temperature: {node.temperature} is below "
            f"ambient {node.ambient}"
        )
    if not (0 < node.fan_factor <= 1):
        raise ConfigInvalid("environment.thermal.fan_factor: must be in (0, 1]")

    b = thresholds.battery_bounds
    if len(b) != 4 or not all(0 < x < 1 for x in b):
        raise ConfigInvalid("thresholds.battery: need 4 fractions in (0, 1)")
    if any(lo >= hi for lo, hi in zip(b, b[1:])):
        raise ConfigInvalid("thresholds.battery: must be strictly ascending")
    t = thresholds.temp_bounds
    if len(t) != 2 or t[0] >= t[1]:
        raise ConfigInvalid("thresholds.temperature: need 2 ascending values")


def drain(battery: Battery, energy: float) -> Battery:
    if energy < 0:
        raise NegativeEnergy(f"cannot drain {energy} J")
    if battery.source == BatterySource.POWER_SUPPLY:
        return battery
    return replace(battery, charge=max(0.0, battery.charge - energy))


def classify_battery(battery: Battery, thresholds: ClassThresholds) -> BatteryClass:
    if battery.source == BatterySource.POWER_SUPPLY:
        return BatteryClass.POWER_SUPPLY
    return classify_fraction(battery.charge / battery.capacity, thresholds)


def classify_fraction(fraction: float, thresholds: ClassThresholds) -> BatteryClass:
    return _BATTERY_BANDS[bisect.bisect_right(thresholds.battery_bounds, fraction)]


def step_temperature(node: ThermalNode, power: float, dt: float) -> ThermalNode:
    """
    One explicit-Euler step of C dT/dt = P - (T - ambient) / R_eff.
    """
    if dt > node.max_step * (1 + 1e-12):
        raise UnstableStep(f"dt={dt} exceeds stability bound {node.max_step}")
    r = node.r_th_eff
    dT = power / node.c_th - (node.temperature - node.ambient) / (r * node.c_th)
    return replace(node, temperature=node.temperature + dT * dt)


def project_temperature(
    node: ThermalNode, power: float, duration: float
) -> Tuple[float, float, float]:
    """
    Steps the node through `duration` at constant power, subdivided into equal
    steps within the stability bound.

    Returns (end T, integral of (T - ambient) dt over the interval, peak T).
    """
    if duration <= 0:
        return node.temperature, 0.0, node.temperature
    n = max(1, math.ceil(duration / node.max_step))
    h = duration / n
    # step_temperature's update, kept on floats
    c = node.c_th
    rc = node.r_th_eff * c
    ambient = node.ambient
    temp = node.temperature
    area = 0.0
    peak = temp
    for _ in range(n):
        prev = temp
        temp = temp + (power / c - (temp - ambient) / rc) * h
        area += ((prev + temp) / 2 - ambient) * h
        if temp > peak:
            peak = temp
    return temp, area, peak


def advance_temperature(
    node: ThermalNode, power: float, duration: float
) -> Tuple[ThermalNode, float, float]:
    temp, area, peak = project_temperature(node, power, duration)
    if duration <= 0:
        return node, area, peak
    return replace(node, temperature=temp), area, peak


def classify_temperature(node: ThermalNode, thresholds: ClassThresholds) -> TempClass:
    return classify_degrees(node.temperature, thresholds)


def classify_degrees(temperature: float, thresholds: ClassThresholds) -> TempClass:
    return _TEMP_BANDS[bisect.bisect_right(thresholds.temp_bounds, temperature)]


def set_fan(node: ThermalNode, on: bool) -> ThermalNode:
    return replace(node, fan_on=on)
