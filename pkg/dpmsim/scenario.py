import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from keke import ktrace

from .environment import (
    Battery,
    BatterySource,
    ClassThresholds,
    ThermalNode,
    validate_environment,
)
from .gem import GemConfig
from .lem import (
    DEFAULT_RULE_TABLE,
    LemConfig,
    parse_rule_table,
    PriorityClass,
    rule_document,
    RuleTable,
    shadowed_rules,
)
from .psm import (
    build_transitions,
    DEFAULT_ENTRY_COSTS,
    DEFAULT_EXIT_COSTS,
    default_psm_config,
    PowerState,
    PsmConfig,
    StateParams,
    TransitionCost,
    validate_psm_config,
)
from .types import ConfigInvalid, IpId
from .workload import (
    Activity,
    ACTIVITY_IDLE,
    DEFAULT_CYCLES,
    TrafficGenerator,
    UNIFORM_MIX,
    validate_generator,
)

try:
    import orjson

    _loads = orjson.loads
except ImportError:
    _loads = json.loads

LOG = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class IpOverrides:
    """Per-IP LEM adaptation; None means use the scenario-wide value."""

    alpha: Optional[float] = None
    rules: Optional[RuleTable] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    generators: Tuple[TrafficGenerator, ...]
    psm: PsmConfig = field(default_factory=default_psm_config)
    battery: Battery = Battery(capacity=100.0, charge=90.0)
    thermal: ThermalNode = ThermalNode(temperature=40.0)
    thresholds: ClassThresholds = ClassThresholds()
    rules: RuleTable = DEFAULT_RULE_TABLE
    lem: LemConfig = LemConfig()
    gem: GemConfig = GemConfig()
    overrides: Mapping[IpId, IpOverrides] = field(default_factory=dict)
    duration: float = 1.0
    seed: int = 0
    allow_off: bool = True

    def rules_for(self, ip: IpId) -> RuleTable:
        o = self.overrides.get(ip)
        return o.rules if o is not None and o.rules is not None else self.rules

    def alpha_for(self, ip: IpId) -> float:
        o = self.overrides.get(ip)
        return o.alpha if o is not None and o.alpha is not None else self.lem.alpha


def _section(doc: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigInvalid(f"{key}: expected an object")
    return value


def _number(obj: Mapping[str, Any], key: str, default: Any, where: str) -> float:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(f"{where}.{key}: expected a number")
    return float(value)


def _integer(obj: Mapping[str, Any], key: str, default: Any, where: str) -> int:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalid(f"{where}.{key}: expected an integer")
    return value


def _flag(obj: Mapping[str, Any], key: str, default: bool, where: str) -> bool:
    value = obj.get(key, default)
    if not isinstance(value, bool):
        raise ConfigInvalid(f"{where}.{key}: expected true or false")
    return value


def _pair(value: Any, where: str) -> Tuple[float, float]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        )
    ):
        raise ConfigInvalid(f"{where}: expected [number, number]")
    return float(value[0]), float(value[1])


def _state(name: Any, where: str) -> PowerState:
    try:
        return PowerState(name)
    except ValueError:
        raise ConfigInvalid(f"{where}: unknown state {name!r}")


def parse_psm(obj: Mapping[str, Any]) -> PsmConfig:
    base = default_psm_config()
    params: Dict[PowerState, StateParams] = dict(base.params)
    states = obj.get("states", {})
    if not isinstance(states, dict):
        raise ConfigInvalid("psm.states: expected an object")
    for name, p in states.items():
        s = _state(name, f"psm.states.{name}")
        if not isinstance(p, dict):
            raise ConfigInvalid(f"psm.states.{name}: expected an object")
        where = f"psm.states.{name}"
        params[s] = StateParams(
            voltage_scale=_number(p, "voltage_scale", params[s].voltage_scale, where),
            freq_scale=_number(p, "freq_scale", params[s].freq_scale, where),
            idle_power=_number(p, "idle_power", params[s].idle_power, where),
        )

    if "transitions" in obj:
        if "entry_cost" in obj or "exit_cost" in obj:
            raise ConfigInvalid("psm: give transitions or entry/exit costs, not both")
        table = obj["transitions"]
        if not isinstance(table, dict):
            raise ConfigInvalid("psm.transitions: expected an object")
        # pairs not listed keep their default cost
        transitions = dict(base.transitions)
        for a_name, row in table.items():
            a = _state(a_name, f"psm.transitions.{a_name}")
            if not isinstance(row, dict):
                raise ConfigInvalid(f"psm.transitions.{a_name}: expected an object")
            for b_name, cost in row.items():
                where = f"psm.transitions.{a_name}.{b_name}"
                b = _state(b_name, where)
                transitions[(a, b)] = TransitionCost(*_pair(cost, where))
    else:
        costs = []
        for key, defaults in (
            ("entry_cost", DEFAULT_ENTRY_COSTS),
            ("exit_cost", DEFAULT_EXIT_COSTS),
        ):
            merged = dict(defaults)
            section = obj.get(key, {})
            if not isinstance(section, dict):
                raise ConfigInvalid(f"psm.{key}: expected an object")
            for name, cost in section.items():
                where = f"psm.{key}.{name}"
                merged[_state(name, where)] = TransitionCost(*_pair(cost, where))
            costs.append(merged)
        transitions = build_transitions(costs[0], costs[1])

    config = PsmConfig(
        params=params,
        transitions=transitions,
        nominal_cycle_time=_number(
            obj, "nominal_cycle_time", base.nominal_cycle_time, "psm"
        ),
        nominal_cycle_energy=_number(
            obj, "nominal_cycle_energy", base.nominal_cycle_energy, "psm"
        ),
    )
    validate_psm_config(config)
    return config


def _parse_mix(value: Any, where: str) -> Tuple[Tuple[PriorityClass, float], ...]:
    if not isinstance(value, dict):
        raise ConfigInvalid(f"{where}: expected an object of class -> weight")
    weights: Dict[PriorityClass, float] = {}
    for k, w in value.items():
        try:
            p = PriorityClass(k)
        except ValueError:
            raise ConfigInvalid(f"{where}: unknown priority {k!r}")
        weights[p] = _number(value, k, None, where)
    return tuple((p, weights.get(p, 0.0)) for p in PriorityClass)


def parse_generator(obj: Any, where: str) -> TrafficGenerator:
    if not isinstance(obj, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    ip = obj.get("ip")
    if not isinstance(ip, str) or not ip:
        raise ConfigInvalid(f"{where}.ip: expected a non-empty string")

    activity: Optional[Activity] = None
    if obj.get("activity") is not None:
        try:
            activity = Activity(obj["activity"])
        except ValueError:
            raise ConfigInvalid(f"{where}.activity: expected 'high' or 'low'")
    if "idle" in obj:
        idle = _pair(obj["idle"], f"{where}.idle")
    elif activity is not None:
        idle = ACTIVITY_IDLE[activity]
    else:
        raise ConfigInvalid(f"{where}: needs an activity or explicit idle bounds")

    cycles = DEFAULT_CYCLES
    if "cycles" in obj:
        c = obj["cycles"]
        if (
            not isinstance(c, list)
            or len(c) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in c)
        ):
            raise ConfigInvalid(f"{where}.cycles: expected [int, int]")
        cycles = (c[0], c[1])

    mix = UNIFORM_MIX
    if "priority_mix" in obj:
        mix = _parse_mix(obj["priority_mix"], f"{where}.priority_mix")

    max_tasks = obj.get("max_tasks")
    if max_tasks is not None:
        max_tasks = _integer(obj, "max_tasks", None, where)

    gen = TrafficGenerator(
        ip_id=IpId(ip),
        static_priority=_integer(obj, "static_priority", 1, where),
        activity=activity,
        cycles=cycles,
        idle=idle,
        priority_mix=mix,
        seed=_integer(obj, "seed", 0, where) & ((1 << 64) - 1),
        max_tasks=max_tasks,
    )
    validate_generator(gen, where)
    return gen


def _parse_overrides(obj: Mapping[str, Any], where: str) -> IpOverrides:
    alpha = None
    if "alpha" in obj:
        alpha = _number(obj, "alpha", None, where)
        if not (0 < alpha <= 1):
            raise ConfigInvalid(f"{where}.alpha: must be in (0, 1]")
    rules = None
    if "rules" in obj:
        rules = parse_rule_table(
            obj["rules"], obj.get("fallback", "ON4"), where=f"{where}.rules"
        )
    return IpOverrides(alpha=alpha, rules=rules)


@ktrace()
def parse_scenario(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigInvalid("scenario: expected a JSON object")
    fmt = doc.get("format", FORMAT_VERSION)
    if fmt != FORMAT_VERSION:
        raise ConfigInvalid(f"format: unsupported version {fmt!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigInvalid("name: expected a non-empty string")

    gens = doc.get("generators")
    if not isinstance(gens, list) or not gens:
        raise ConfigInvalid("generators: at least one generator is required")
    generators = tuple(
        parse_generator(g, f"generators[{i}]") for i, g in enumerate(gens)
    )
    seen = set()
    for i, g in enumerate(generators):
        if g.ip_id in seen:
            raise ConfigInvalid(f"generators[{i}].ip: duplicate {g.ip_id!r}")
        seen.add(g.ip_id)
    overrides = {
        g.ip_id: _parse_overrides(raw, f"generators[{i}]")
        for i, (g, raw) in enumerate(zip(generators, gens))
        if "alpha" in raw or "rules" in raw
    }

    psm = parse_psm(_section(doc, "psm"))

    env = _section(doc, "environment")
    bat = env.get("battery", {})
    th = env.get("thermal", {})
    if not isinstance(bat, dict) or not isinstance(th, dict):
        raise ConfigInvalid("environment: battery and thermal must be objects")
    try:
        source = BatterySource(bat.get("source", "OnBattery"))
    except ValueError:
        raise ConfigInvalid("environment.battery.source: OnBattery or PowerSupply")
    capacity = _number(bat, "capacity", 100.0, "environment.battery")
    battery = Battery(
        capacity=capacity,
        charge=_number(bat, "charge", capacity * 0.9, "environment.battery"),
        source=source,
    )
    where = "environment.thermal"
    thermal = ThermalNode(
        temperature=_number(th, "temperature", 40.0, where),
        ambient=_number(th, "ambient", 25.0, where),
        r_th=_number(th, "r_th", 20.0, where),
        c_th=_number(th, "c_th", 1e-3, where),
        fan_factor=_number(th, "fan_factor", 0.5, where),
    )

    thr = _section(doc, "thresholds")
    default_thr = ClassThresholds()
    bb = thr.get("battery", list(default_thr.battery_bounds))
    tb = thr.get("temperature", list(default_thr.temp_bounds))
    if not isinstance(bb, list) or not isinstance(tb, list):
        raise ConfigInvalid("thresholds: battery and temperature must be lists")
    for i, x in enumerate(bb + tb):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigInvalid(f"thresholds: entry {i} is not a number")
    thresholds = ClassThresholds(
        tuple(float(x) for x in bb), tuple(float(x) for x in tb)  # type: ignore
    )
    validate_environment(battery, thermal, thresholds)

    rules = DEFAULT_RULE_TABLE
    if "rules" in doc or "fallback" in doc:
        rules = parse_rule_table(
            doc.get("rules", list(map(rule_document, DEFAULT_RULE_TABLE.rules))),
            doc.get("fallback", "ON4"),
        )

    lem_doc = _section(doc, "lem")
    lem = LemConfig(
        alpha=_number(lem_doc, "alpha", 0.5, "lem"),
        estimate_noise=_number(lem_doc, "estimate_noise", 0.0, "lem"),
        idle_policy=_flag(lem_doc, "idle_policy", True, "lem"),
    )
    if not (0 < lem.alpha <= 1):
        raise ConfigInvalid("lem.alpha: must be in (0, 1]")
    if lem.estimate_noise < 0:
        raise ConfigInvalid("lem.estimate_noise: must be >= 0")

    gem_doc = _section(doc, "gem")
    gem = GemConfig(
        present=_flag(gem_doc, "present", False, "gem"),
        high_priority_threshold=_integer(gem_doc, "high_priority_threshold", 2, "gem"),
    )

    duration = _number(doc, "duration", 1.0, "scenario")
    if duration <= 0:
        raise ConfigInvalid("duration: must be > 0")

    scenario = Scenario(
        name=name,
        generators=generators,
        psm=psm,
        battery=battery,
        thermal=thermal,
        thresholds=thresholds,
        rules=rules,
        lem=lem,
        gem=gem,
        overrides=overrides,
        duration=duration,
        seed=_integer(doc, "seed", 0, "scenario") & ((1 << 64) - 1),
        allow_off=_flag(doc, "allow_off", not gem.present, "scenario"),
    )
    return scenario


def scenario_warnings(scenario: Scenario) -> List[str]:
    """Legal but suspicious things, for `dpmsim validate`."""
    warnings = list(validate_psm_config(scenario.psm))
    tables = [("rules", scenario.rules)] + [
        (f"generators.{ip}.rules", o.rules)
        for ip, o in sorted(scenario.overrides.items())
        if o.rules is not None
    ]
    for where, table in tables:
        for i in shadowed_rules(table):
            warnings.append(f"{where}[{i}]: shadowed by earlier rows, never fires")
    for w in warnings:
        LOG.warning(w)
    return warnings


@ktrace("path")
def load_scenario(path: str) -> Scenario:
    """
    Loads a scenario file; "-" reads standard input.
    """
    try:
        if path == "-":
            data = sys.stdin.read()
        else:
            data = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigInvalid(f"scenario: not valid UTF-8 ({e})")
    try:
        doc = _loads(data)
    except ValueError as e:
        raise ConfigInvalid(f"scenario: not valid JSON ({e})")
    return parse_scenario(doc)


def _cost(c: TransitionCost) -> List[float]:
    return [c.delay, c.energy]


def psm_document(config: PsmConfig) -> Dict[str, Any]:
    return {
        "nominal_cycle_time": config.nominal_cycle_time,
        "nominal_cycle_energy": config.nominal_cycle_energy,
        "states": {
            s.value: {
                "voltage_scale": config.params[s].voltage_scale,
                "freq_scale": config.params[s].freq_scale,
                "idle_power": config.params[s].idle_power,
            }
            for s in PowerState
        },
        "transitions": {
            a.value: {
                b.value: _cost(config.transitions[(a, b)])
                for b in PowerState
                if a != b
            }
            for a in PowerState
        },
    }


def generator_document(gen: TrafficGenerator) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "ip": gen.ip_id,
        "static_priority": gen.static_priority,
        "cycles": list(gen.cycles),
        "idle": list(gen.idle),
        "priority_mix": {p.value: w for p, w in gen.priority_mix},
        "seed": gen.seed,
    }
    if gen.activity is not None:
        doc["activity"] = gen.activity.value
    if gen.max_tasks is not None:
        doc["max_tasks"] = gen.max_tasks
    return doc


def scenario_document(scenario: Scenario) -> Dict[str, Any]:
    generators = []
    for gen in scenario.generators:
        doc = generator_document(gen)
        o = scenario.overrides.get(gen.ip_id)
        if o is not None and o.alpha is not None:
            doc["alpha"] = o.alpha
        if o is not None and o.rules is not None:
            doc["rules"] = [rule_document(r) for r in o.rules.rules]
            doc["fallback"] = o.rules.fallback.value
        generators.append(doc)

    return {
        "format": FORMAT_VERSION,
        "name": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "allow_off": scenario.allow_off,
        "generators": generators,
        "psm": psm_document(scenario.psm),
        "environment": {
            "battery": {
                "capacity": scenario.battery.capacity,
                "charge": scenario.battery.charge,
                "source": scenario.battery.source.value,
            },
            "thermal": {
                "temperature": scenario.thermal.temperature,
                "ambient": scenario.thermal.ambient,
                "r_th": scenario.thermal.r_th,
                "c_th": scenario.thermal.c_th,
                "fan_factor": scenario.thermal.fan_factor,
            },
        },
        "thresholds": {
            "battery": list(scenario.thresholds.battery_bounds),
            "temperature": list(scenario.thresholds.temp_bounds),
        },
        "rules": [rule_document(r) for r in scenario.rules.rules],
        "fallback": scenario.rules.fallback.value,
        "lem": {
            "alpha": scenario.lem.alpha,
            "estimate_noise": scenario.lem.estimate_noise,
            "idle_policy": scenario.lem.idle_policy,
        },
        "gem": {
            "present": scenario.gem.present,
            "high_priority_threshold": scenario.gem.high_priority_threshold,
        },
    }


def dumps_document(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2) + "\n"
