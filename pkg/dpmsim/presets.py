from typing import Any, Dict, Mapping, Tuple

from .environment import Battery, ThermalNode
from .gem import GemConfig
from .lem import PriorityClass
from .scenario import parse_scenario, Scenario, scenario_document
from .types import IpId
from .workload import Activity, ACTIVITY_IDLE, TrafficGenerator, UNIFORM_MIX


class UnknownScenario(KeyError):
    pass


CAPACITY = 100.0
CHARGE_FULL = 0.90 * CAPACITY
CHARGE_LOW = 0.15 * CAPACITY
TEMP_LOW = 40.0
TEMP_HIGH = 90.0
DURATION = 1.0

# A1-A4 must execute the same sequence of tasks.
SHARED_SEED = 1

PRESETS: Mapping[str, str] = {
    "A1": "1 IP, high activity, battery Full, temperature Low, no GEM",
    "A2": "1 IP, high activity, battery Low, temperature Low, no GEM",
    "A3": "1 IP, high activity, battery Full, temperature High, no GEM",
    "A4": "1 IP, high activity, battery Low, temperature High, no GEM",
    "B": "4 IPs behind a GEM, IP1/IP2 busy, IP3/IP4 mostly idle, battery Low",
    "C": "4 IPs behind a GEM, IP1/IP2 mostly idle, IP3/IP4 busy, battery Low",
}

_SINGLE: Mapping[str, Tuple[float, float]] = {
    "A1": (CHARGE_FULL, TEMP_LOW),
    "A2": (CHARGE_LOW, TEMP_LOW),
    "A3": (CHARGE_FULL, TEMP_HIGH),
    "A4": (CHARGE_LOW, TEMP_HIGH),
}

_MULTI: Mapping[str, Tuple[Activity, ...]] = {
    "B": (Activity.HIGH, Activity.HIGH, Activity.LOW, Activity.LOW),
    "C": (Activity.LOW, Activity.LOW, Activity.HIGH, Activity.HIGH),
}

# static priority rank -> the task class that IP mostly issues
_RANK_CLASS = {
    1: PriorityClass.V,
    2: PriorityClass.H,
    3: PriorityClass.M,
    4: PriorityClass.L,
}


def skewed_mix(rank: int) -> Tuple[Tuple[PriorityClass, float], ...]:
    favored = _RANK_CLASS[rank]
    return tuple((p, 0.55 if p == favored else 0.15) for p in PriorityClass)


def build_preset(name: str) -> Scenario:
    if name in _SINGLE:
        charge, temperature = _SINGLE[name]
        return Scenario(
            name=name,
            generators=(
                TrafficGenerator(
                    ip_id=IpId("IP1"),
                    static_priority=1,
                    activity=Activity.HIGH,
                    idle=ACTIVITY_IDLE[Activity.HIGH],
                    priority_mix=UNIFORM_MIX,
                    seed=SHARED_SEED,
                ),
            ),
            battery=Battery(capacity=CAPACITY, charge=charge),
            thermal=ThermalNode(temperature=temperature),
            gem=GemConfig(present=False),
            duration=DURATION,
            allow_off=True,
        )
    if name in _MULTI:
        generators = tuple(
            TrafficGenerator(
                ip_id=IpId(f"IP{rank}"),
                static_priority=rank,
                activity=activity,
                idle=ACTIVITY_IDLE[activity],
                priority_mix=skewed_mix(rank),
                seed=SHARED_SEED,
            )
            for rank, activity in enumerate(_MULTI[name], start=1)
        )
        return Scenario(
            name=name,
            generators=generators,
            battery=Battery(capacity=CAPACITY, charge=CHARGE_LOW),
            thermal=ThermalNode(temperature=TEMP_LOW),
            gem=GemConfig(present=True, high_priority_threshold=2),
            duration=DURATION,
            allow_off=False,
        )
    raise UnknownScenario(name)


def preset_document(name: str) -> Dict[str, Any]:
    return scenario_document(build_preset(name))


def scenario_preset(name: str) -> Scenario:
    """
    Returns the named preset as `run` would load it from its dumped document,
    so `preset dump NAME | dpmsim run -` and `run --preset NAME` agree exactly.
    """
    return parse_scenario(preset_document(name))
