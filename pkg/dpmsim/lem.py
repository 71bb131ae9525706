import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import (
    Any,
    Callable,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
    TYPE_CHECKING,
    TypeVar,
)

from .environment import (
    advance_temperature,
    Battery,
    BatteryClass,
    classify_battery,
    classify_temperature,
    ClassThresholds,
    drain,
    TempClass,
    ThermalNode,
)
from .psm import (
    idle_power,
    instruction_cost,
    PowerState,
    PsmConfig,
    RESTING_STATES,
    SLEEP_STATES,
    transition,
)
from .types import ConfigInvalid

if TYPE_CHECKING:  # pragma: no cover
    from .workload import Task

LOG = logging.getLogger(__name__)

E = TypeVar("E", bound=enum.Enum)


class InvalidStates(ValueError):
    pass


class NegativeIdle(ValueError):
    pass


class PriorityClass(enum.Enum):
    L = "L"
    M = "M"
    H = "H"
    V = "V"

    @property
    def rank(self) -> int:
        return "LMHV".index(self.value)


# A rule cell is None (the "-" wildcard) or the set of classes it accepts.
@dataclass(frozen=True)
class Rule:
    priority: Optional[FrozenSet[PriorityClass]]
    battery: Optional[FrozenSet[BatteryClass]]
    temperature: Optional[FrozenSet[TempClass]]
    result: PowerState

    def matches(
        self, priority: PriorityClass, battery: BatteryClass, temperature: TempClass
    ) -> bool:
        return (
            (self.priority is None or priority in self.priority)
            and (self.battery is None or battery in self.battery)
            and (self.temperature is None or temperature in self.temperature)
        )


@dataclass(frozen=True)
class RuleTable:
    rules: Tuple[Rule, ...]
    fallback: PowerState = PowerState.ON4


RULE_RESULTS = (
    PowerState.ON1,
    PowerState.ON2,
    PowerState.ON3,
    PowerState.ON4,
    PowerState.SL1,
)

# The default power state selection table.  Battery "PS" is the
# power-supply row.
DEFAULT_RULES: Tuple[Mapping[str, Any], ...] = (
    {"priority": "V", "battery": "E", "temperature": "-", "state": "ON4"},
    {"priority": "V", "battery": "-", "temperature": "H", "state": "ON4"},
    {"priority": "H,M,L", "battery": "E", "temperature": "-", "state": "SL1"},
    {"priority": "H,M,L", "battery": "-", "temperature": "H", "state": "SL1"},
    {"priority": "-", "battery": "L", "temperature": "M,L", "state": "ON4"},
    # Never fires under first-match: row 3 covers it.
    {"priority": "-", "battery": "E", "temperature": "M", "state": "ON4"},
    {"priority": "V", "battery": "M,H", "temperature": "L", "state": "ON1"},
    {"priority": "H", "battery": "M,H", "temperature": "L", "state": "ON2"},
    {"priority": "M", "battery": "M,H", "temperature": "L", "state": "ON3"},
    {"priority": "L", "battery": "M,H", "temperature": "L", "state": "ON4"},
    {"priority": "V,H,M", "battery": "F", "temperature": "L", "state": "ON1"},
    {"priority": "L", "battery": "F", "temperature": "L", "state": "ON2"},
    {"priority": "-", "battery": "PS", "temperature": "M,L", "state": "ON1"},
)


def _parse_cell(
    value: Any, enum_type: Callable[[str], E], where: str
) -> Optional[FrozenSet[E]]:
    if isinstance(value, str):
        if value.strip() == "-":
            return None
        items: Iterable[Any] = value.split(",")
    elif isinstance(value, list):
        items = value
    else:
        raise ConfigInvalid(f"{where}: expected '-', a list or a comma string")
    out = set()
    for item in items:
        if not isinstance(item, str):
            raise ConfigInvalid(f"{where}: class names must be strings")
        try:
            out.add(enum_type(item.strip()))
        except ValueError:
            raise ConfigInvalid(f"{where}: unknown class {item.strip()!r}")
    if not out:
        raise ConfigInvalid(f"{where}: empty class set")
    return frozenset(out)


def parse_rule(row: Any, where: str) -> Rule:
    if not isinstance(row, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    missing = {"priority", "battery", "temperature", "state"} - set(row)
    if missing:
        raise ConfigInvalid(f"{where}: missing {', '.join(sorted(missing))}")
    try:
        result = PowerState(row["state"])
    except ValueError:
        raise ConfigInvalid(f"{where}.state: unknown state {row['state']!r}")
    if result not in RULE_RESULTS:
        raise ConfigInvalid(f"{where}.state: must be an ON state or SL1")
    return Rule(
        priority=_parse_cell(row["priority"], PriorityClass, f"{where}.priority"),
        battery=_parse_cell(row["battery"], BatteryClass, f"{where}.battery"),
        temperature=_parse_cell(
            row["temperature"], TempClass, f"{where}.temperature"
        ),
        result=result,
    )


def _cell_document(cell: Optional[FrozenSet[Any]], order: Iterable[Any]) -> str:
    if cell is None:
        return "-"
    return ",".join(x.value for x in order if x in cell)


def rule_document(rule: Rule) -> Mapping[str, str]:
    return {
        "priority": _cell_document(rule.priority, reversed(list(PriorityClass))),
        "battery": _cell_document(rule.battery, BatteryClass),
        "temperature": _cell_document(rule.temperature, reversed(list(TempClass))),
        "state": rule.result.value,
    }


def parse_rule_table(rows: Any, fallback: Any = "ON4", where: str = "rules") -> RuleTable:
    if not isinstance(rows, list):
        raise ConfigInvalid(f"{where}: expected a list")
    try:
        fb = PowerState(fallback)
    except ValueError:
        raise ConfigInvalid(f"fallback: unknown state {fallback!r}")
    if fb not in RULE_RESULTS:
        raise ConfigInvalid("fallback: must be an ON state or SL1")
    return RuleTable(
        tuple(parse_rule(r, f"{where}[{i}]") for i, r in enumerate(rows)), fb
    )


DEFAULT_RULE_TABLE = parse_rule_table(list(DEFAULT_RULES))


def select_power_state(
    priority: PriorityClass,
    battery: BatteryClass,
    temperature: TempClass,
    table: RuleTable,
) -> PowerState:
    for rule in table.rules:
        if rule.matches(priority, battery, temperature):
            return rule.result
    return table.fallback


def shadowed_rules(table: RuleTable) -> List[int]:
    """
    Indices of rows that can never fire because earlier rows cover every input
    they match.
    """
    shadowed = []
    for i, rule in enumerate(table.rules):
        live = False
        for p in PriorityClass:
            for b in BatteryClass:
                for t in TempClass:
                    if not rule.matches(p, b, t):
                        continue
                    if not any(r.matches(p, b, t) for r in table.rules[:i]):
                        live = True
        if not live:
            shadowed.append(i)
    return shadowed


@dataclass(frozen=True)
class LemConfig:
    alpha: float = 0.5
    # Multiplicative noise on the energy estimate posted to the GEM; 0 is exact.
    estimate_noise: float = 0.0
    idle_policy: bool = True


@dataclass(frozen=True)
class Forecast:
    battery_class: BatteryClass
    temp_class: TempClass


@dataclass(frozen=True)
class IdlePredictor:
    alpha: float = 0.5
    predicted: float = 0.0
    initialized: bool = False


def task_energy_estimate(task: "Task", state: PowerState, config: PsmConfig) -> float:
    return instruction_cost(state, task.cycles, config)[1]


def noisy_estimate(estimate: float, noise: float, u: float) -> float:
    """
    Applies the estimate noise hook; `u` is a uniform draw in [0, 1).
    """
    if noise <= 0:
        return estimate
    return max(0.0, estimate * (1 + noise * (2 * u - 1)))


def forecast_end_of_task(
    task: "Task",
    candidate: PowerState,
    others_energy: float,
    battery: Battery,
    node: ThermalNode,
    psm: PsmConfig,
    thresholds: ClassThresholds,
) -> Forecast:
    duration, energy = instruction_cost(candidate, task.cycles, psm)
    total = energy + others_energy
    end_battery = drain(battery, total)
    if duration > 0:
        node, _, _ = advance_temperature(node, total / duration, duration)
    return Forecast(
        classify_battery(end_battery, thresholds),
        classify_temperature(node, thresholds),
    )


def decide_task_state(
    task: "Task",
    gem_enable: bool,
    table: RuleTable,
    others_energy: float,
    battery: Battery,
    node: ThermalNode,
    psm: PsmConfig,
    thresholds: ClassThresholds,
) -> PowerState:
    """
    Picks the power state for `task`.  A GEM denial means SL1.  Otherwise the
    table is applied to the end-of-task forecast at ON1, and if that selects a
    different ON state, once more to the forecast at that state.
    """
    if not gem_enable:
        return PowerState.SL1

    forecast = forecast_end_of_task(
        task, PowerState.ON1, others_energy, battery, node, psm, thresholds
    )
    state = select_power_state(
        task.priority, forecast.battery_class, forecast.temp_class, table
    )
    if state.is_on and state != PowerState.ON1:
        forecast = forecast_end_of_task(
            task, state, others_energy, battery, node, psm, thresholds
        )
        state = select_power_state(
            task.priority, forecast.battery_class, forecast.temp_class, table
        )
    LOG.debug(f"{task.task_id} {task.priority.value} -> {state.value}")
    return state


def break_even_time(
    idle_state: PowerState, sleep_state: PowerState, config: PsmConfig
) -> float:
    """
    Shortest idle period for which going idle_state -> sleep_state -> idle_state
    uses no more energy than staying put.  math.inf when sleeping never pays.
    """
    if not idle_state.is_on or sleep_state not in RESTING_STATES:
        raise InvalidStates(f"{idle_state.value} -> {sleep_state.value}")
    down = transition(idle_state, sleep_state, config)
    up = transition(sleep_state, idle_state, config)
    t_tr = down.delay + up.delay
    e_tr = down.energy + up.energy
    p_i = idle_power(idle_state, config)
    p_s = idle_power(sleep_state, config)
    if p_i <= p_s:
        return math.inf
    return max(t_tr, (e_tr - p_s * t_tr) / (p_i - p_s))


def choose_idle_state(
    predicted_idle: float, idle_state: PowerState, config: PsmConfig, allow_off: bool
) -> PowerState:
    candidates = SLEEP_STATES + ((PowerState.OFF,) if allow_off else ())
    best = idle_state
    for s in candidates:
        if break_even_time(idle_state, s, config) <= predicted_idle:
            if best == idle_state or idle_power(s, config) < idle_power(best, config):
                best = s
    return best


def predict_idle(
    predictor: IdlePredictor, observed_idle: float
) -> Tuple[IdlePredictor, float]:
    if observed_idle < 0:
        raise NegativeIdle(f"observed idle {observed_idle} < 0")
    if not predictor.initialized:
        predicted = observed_idle
    else:
        a = predictor.alpha
        predicted = a * observed_idle + (1 - a) * predictor.predicted
    return replace(predictor, predicted=predicted, initialized=True), predicted
