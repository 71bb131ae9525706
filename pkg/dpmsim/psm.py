import enum
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

from .types import ConfigInvalid

LOG = logging.getLogger(__name__)


class PowerState(enum.Enum):
    OFF = "Off"
    SL1 = "SL1"
    SL2 = "SL2"
    SL3 = "SL3"
    SL4 = "SL4"
    ON1 = "ON1"
    ON2 = "ON2"
    ON3 = "ON3"
    ON4 = "ON4"

    @property
    def is_on(self) -> bool:
        return self in ON_STATES

    @property
    def is_sleep(self) -> bool:
        return self in SLEEP_STATES


# Fastest first, shallowest first.
ON_STATES = (PowerState.ON1, PowerState.ON2, PowerState.ON3, PowerState.ON4)
SLEEP_STATES = (PowerState.SL1, PowerState.SL2, PowerState.SL3, PowerState.SL4)
# Shallowest to deepest; Off is the deepest "sleep" for wake-cost purposes.
RESTING_STATES = SLEEP_STATES + (PowerState.OFF,)


class NotExecutableState(Exception):
    pass


@dataclass(frozen=True)
class StateParams:
    voltage_scale: float  # fraction of nominal Vdd
    freq_scale: float  # fraction of nominal clock, 0 when not an ON state
    idle_power: float  # watts while resident and not executing


@dataclass(frozen=True)
class TransitionCost:
    delay: float = 0.0  # seconds
    energy: float = 0.0  # joules

    def __add__(self, other: "TransitionCost") -> "TransitionCost":
        return TransitionCost(self.delay + other.delay, self.energy + other.energy)


ZERO_COST = TransitionCost()

TransitionTable = Dict[Tuple[PowerState, PowerState], TransitionCost]


@dataclass(frozen=True)
class PsmConfig:
    params: Mapping[PowerState, StateParams]
    transitions: Mapping[Tuple[PowerState, PowerState], TransitionCost]
    nominal_cycle_time: float = 5e-9
    nominal_cycle_energy: float = 5e-9


DEFAULT_STATE_PARAMS: Dict[PowerState, StateParams] = {
    PowerState.ON1: StateParams(1.00, 1.00, 0.25),
    PowerState.ON2: StateParams(0.85, 0.80, 0.18),
    PowerState.ON3: StateParams(0.70, 0.60, 0.12),
    PowerState.ON4: StateParams(0.55, 0.40, 0.07),
    PowerState.SL1: StateParams(0.55, 0.0, 0.05),
    PowerState.SL2: StateParams(0.45, 0.0, 0.02),
    PowerState.SL3: StateParams(0.35, 0.0, 0.008),
    PowerState.SL4: StateParams(0.25, 0.0, 0.002),
    PowerState.OFF: StateParams(0.0, 0.0, 0.0),
}

# cost(A -> B) = exit(A) + entry(B) for A != B
DEFAULT_ENTRY_COSTS: Dict[PowerState, TransitionCost] = {
    PowerState.ON1: TransitionCost(2e-6, 1e-6),
    PowerState.ON2: TransitionCost(2e-6, 1e-6),
    PowerState.ON3: TransitionCost(2e-6, 1e-6),
    PowerState.ON4: TransitionCost(2e-6, 1e-6),
    PowerState.SL1: TransitionCost(2e-6, 1e-6),
    PowerState.SL2: TransitionCost(5e-6, 3e-6),
    PowerState.SL3: TransitionCost(1e-5, 8e-6),
    PowerState.SL4: TransitionCost(2e-5, 1.5e-5),
    PowerState.OFF: TransitionCost(3e-5, 2.5e-5),
}
DEFAULT_EXIT_COSTS: Dict[PowerState, TransitionCost] = {
    PowerState.ON1: ZERO_COST,
    PowerState.ON2: ZERO_COST,
    PowerState.ON3: ZERO_COST,
    PowerState.ON4: ZERO_COST,
    PowerState.SL1: TransitionCost(5e-6, 3e-6),
    PowerState.SL2: TransitionCost(1e-5, 8e-6),
    PowerState.SL3: TransitionCost(2.5e-5, 2e-5),
    PowerState.SL4: TransitionCost(5e-5, 4.5e-5),
    PowerState.OFF: TransitionCost(1e-4, 1.2e-4),
}


def build_transitions(
    entry: Mapping[PowerState, TransitionCost],
    exit: Mapping[PowerState, TransitionCost],
) -> TransitionTable:
    table: TransitionTable = {}
    for a in PowerState:
        for b in PowerState:
            table[(a, b)] = ZERO_COST if a == b else exit[a] + entry[b]
    return table


def default_psm_config() -> PsmConfig:
    return PsmConfig(
        params=dict(DEFAULT_STATE_PARAMS),
        transitions=build_transitions(DEFAULT_ENTRY_COSTS, DEFAULT_EXIT_COSTS),
    )


def instruction_cost(
    state: PowerState, cycles: int, config: PsmConfig
) -> Tuple[float, float]:
    """
    Returns (duration seconds, energy joules) for executing `cycles` cycles in
    an ON state.  Time scales with 1/f, energy with Vdd squared.
    """
    if not state.is_on:
        raise NotExecutableState(f"{state.value} cannot execute instructions")
    p = config.params[state]
    duration = cycles * config.nominal_cycle_time / p.freq_scale
    energy = cycles * config.nominal_cycle_energy * p.voltage_scale**2
    return duration, energy


def transition(
    current: PowerState, target: PowerState, config: PsmConfig
) -> TransitionCost:
    if current == target:
        return ZERO_COST
    return config.transitions[(current, target)]


def idle_power(state: PowerState, config: PsmConfig) -> float:
    if state == PowerState.OFF:
        return 0.0
    return config.params[state].idle_power


def wake_cost(state: PowerState, config: PsmConfig) -> TransitionCost:
    return transition(state, PowerState.ON1, config)


def validate_psm_config(config: PsmConfig) -> List[str]:
    """
    Raises ConfigInvalid for broken invariants; returns a list of warnings for
    things that are legal but suspicious (triangle violations).
    """
    for s in PowerState:
        if s not in config.params:
            raise ConfigInvalid(f"psm.states.{s.value}: missing")
    if config.nominal_cycle_time <= 0 or config.nominal_cycle_energy < 0:
        raise ConfigInvalid("psm: nominal cycle time must be > 0, energy >= 0")

    on1 = config.params[PowerState.ON1]
    if on1.voltage_scale != 1.0 or on1.freq_scale != 1.0:
        raise ConfigInvalid("psm.states.ON1: scales must both be 1.0")

    for s in PowerState:
        p = config.params[s]
        # Off is the only state allowed to remove the supply entirely
        if p.voltage_scale > 1.0 or p.voltage_scale < 0.0:
            raise ConfigInvalid(f"psm.states.{s.value}.voltage_scale: out of range")
        if p.voltage_scale == 0.0 and s != PowerState.OFF:
            raise ConfigInvalid(f"psm.states.{s.value}.voltage_scale: out of range")
        if s.is_on:
            if not (0.0 < p.freq_scale <= 1.0):
                raise ConfigInvalid(f"psm.states.{s.value}.freq_scale: out of range")
        elif p.freq_scale != 0.0:
            raise ConfigInvalid(f"psm.states.{s.value}.freq_scale: must be 0")
        if p.idle_power < 0:
            raise ConfigInvalid(f"psm.states.{s.value}.idle_power: negative")

    for a, b in zip(ON_STATES, ON_STATES[1:]):
        pa, pb = config.params[a], config.params[b]
        if not (pb.voltage_scale < pa.voltage_scale and pb.freq_scale < pa.freq_scale):
            raise ConfigInvalid(
                f"psm.states.{b.value}: scales must be below {a.value}'s"
            )
    for a, b in zip(SLEEP_STATES, SLEEP_STATES[1:]):
        if not config.params[b].idle_power < config.params[a].idle_power:
            raise ConfigInvalid(
                f"psm.states.{b.value}.idle_power: must be below {a.value}'s"
            )
    if config.params[PowerState.OFF].idle_power != 0.0:
        raise ConfigInvalid("psm.states.Off.idle_power: must be 0")

    for a in PowerState:
        for b in PowerState:
            cost = config.transitions.get((a, b))
            if cost is None:
                raise ConfigInvalid(f"psm.transitions.{a.value}.{b.value}: missing")
            if cost.delay < 0 or cost.energy < 0:
                raise ConfigInvalid(
                    f"psm.transitions.{a.value}.{b.value}: negative cost"
                )
            if a == b and cost != ZERO_COST:
                raise ConfigInvalid(
                    f"psm.transitions.{a.value}.{b.value}: self-transition must be free"
                )

    for a, b in zip(RESTING_STATES, RESTING_STATES[1:]):
        wa, wb = wake_cost(a, config), wake_cost(b, config)
        if not (wb.delay > wa.delay and wb.energy > wa.energy):
            raise ConfigInvalid(
                f"psm.transitions.{b.value}.ON1: waking must cost more than from {a.value}"
            )

    warnings = []
    for a, b, c in triangle_violations(config):
        warnings.append(
            f"psm.transitions.{a.value}.{c.value}: slower than via {b.value}"
        )
    for w in warnings:
        LOG.warning(w)
    return warnings


def triangle_violations(
    config: PsmConfig,
) -> List[Tuple[PowerState, PowerState, PowerState]]:
    found = []
    for a in PowerState:
        for b in PowerState:
            for c in PowerState:
                if len({a, b, c}) < 3:
                    continue
                direct = transition(a, c, config).delay
                via = transition(a, b, config).delay + transition(b, c, config).delay
                if direct > via + 1e-15:
                    found.append((a, b, c))
    return found
