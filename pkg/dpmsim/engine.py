import csv
import enum
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, FrozenSet, IO, Iterable, List, Optional, Set, Tuple

import numpy as np
from keke import kev, ktrace

from .environment import (
    Battery,
    BatteryClass,
    BatterySource,
    advance_temperature,
    classify_battery,
    classify_degrees,
    classify_fraction,
    classify_temperature,
    drain,
    project_temperature,
    set_fan,
    TempClass,
    ThermalNode,
)
from .gem import (
    arbitrate,
    clear_estimate,
    EnergyLedger,
    GemDecision,
    IpRegistration,
    others_energy,
    post_estimate,
)
from .lem import (
    choose_idle_state,
    decide_task_state,
    IdlePredictor,
    noisy_estimate,
    predict_idle,
    task_energy_estimate,
)
from .psm import idle_power, instruction_cost, PowerState, transition
from .scenario import Scenario
from .types import IpId
from .workload import make_rng, next_task, Task, TrafficGenerator

LOG = logging.getLogger(__name__)

# Class crossings are located to this many seconds.
RESOLUTION = 1e-6

NOISE_SALT = 0x6E6F697365


class DegenerateBaseline(ValueError):
    pass


class SimulationError(Exception):
    pass


class EventKind(enum.Enum):
    TASK_ARRIVAL = "TaskArrival"
    GEM_ARBITRATION = "GemArbitration"
    TRANSITION_COMPLETE = "TransitionComplete"
    TASK_COMPLETE = "TaskComplete"
    IDLE_TIMEOUT = "IdleTimeout"
    FAN_CHANGE = "FanChange"
    SIM_END = "SimEnd"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    ip_id: Optional[IpId] = None
    task: Optional[Task] = None
    state: Optional[PowerState] = None


@dataclass(frozen=True)
class TraceRecord:
    time: float
    ip_id: str
    event: str
    state: str
    battery: float
    temperature: float
    energy: float


TRACE_HEADER = ("time_s", "ip", "event", "state", "battery_J", "temp_C", "cum_energy_J")


@dataclass
class SimResult:
    scenario: str
    seed: int
    baseline: bool
    duration: float
    total_energy: float
    ip_energy: Dict[IpId, float]
    ambient: float
    mean_temperature: float
    max_temperature: float
    mean_excess: float
    latencies: Dict[str, float]
    arrivals: int
    completed: int
    pending: int
    deferred: int
    initial_charge: float
    final_charge: float
    events: int
    cycles: int
    trace: List[TraceRecord] = field(default_factory=list)

    @property
    def mean_latency(self) -> float:
        if not self.latencies:
            return 0.0
        return math.fsum(self.latencies.values()) / len(self.latencies)


@dataclass(frozen=True)
class Metrics:
    energy_saving_pct: float
    temp_reduction_pct: float
    avg_delay_overhead_pct: float


class Phase(enum.Enum):
    IDLE = "idle"
    TRANSITION = "transition"
    EXECUTING = "executing"


@dataclass
class IpRuntime:
    generator: TrafficGenerator
    rng: np.random.Generator
    noise_rng: np.random.Generator
    predictor: IdlePredictor
    state: PowerState = PowerState.ON1
    phase: Phase = Phase.IDLE
    power: float = 0.0
    queue: Deque[Task] = field(default_factory=deque)
    current: Optional[Task] = None
    target: Optional[PowerState] = None
    idle_since: Optional[float] = None
    # (task_id, label) of the last Deny/Defer row, so a held head is logged once
    held: Optional[Tuple[str, str]] = None
    issued: int = 0
    charges: List[float] = field(default_factory=list)

    @property
    def ip_id(self) -> IpId:
        return self.generator.ip_id

    @property
    def requesting(self) -> bool:
        return bool(self.queue) and self.phase == Phase.IDLE and self.current is None


class Simulation:
    def __init__(
        self, scenario: Scenario, baseline: bool = False, record_trace: bool = True
    ) -> None:
        self.scenario = scenario
        self.baseline = baseline
        self.record_trace = record_trace
        self.gem_present = scenario.gem.present and not baseline

        self.now = 0.0
        self.battery: Battery = scenario.battery
        self.node: ThermalNode = scenario.thermal
        self._heap: List[Tuple[float, int, Event]] = []
        self._seq = 0

        self.ips: Dict[IpId, IpRuntime] = {}
        for gen in scenario.generators:
            ip = IpRuntime(
                generator=gen,
                rng=make_rng(scenario.seed, gen),
                noise_rng=make_rng(scenario.seed ^ NOISE_SALT, gen),
                predictor=IdlePredictor(alpha=scenario.alpha_for(gen.ip_id)),
            )
            ip.power = idle_power(ip.state, scenario.psm)
            self.ips[gen.ip_id] = ip
        self.registrations = {
            g.ip_id: IpRegistration(g.ip_id, g.static_priority)
            for g in scenario.generators
        }
        self.ledger = EnergyLedger(frozenset(self.ips))
        # arbitrate is pure in (battery class, temp class, requesters)
        self._decisions: Dict[
            Tuple[BatteryClass, TempClass, FrozenSet[IpId]], GemDecision
        ] = {}

        self.trace: List[TraceRecord] = []
        self.latencies: Dict[str, float] = {}
        self.held_tasks: Set[str] = set()
        self.arrivals = 0
        self.completed = 0
        self.cycles = 0
        self.events = 0
        self.clamped = False
        self._energy = 0.0
        self._excess_area: List[float] = []
        self._peak = self.node.temperature
        self._classes = self._classify(self.battery, self.node)

    # -- bookkeeping

    def _push(self, t: float, event: Event) -> None:
        heapq.heappush(self._heap, (t, self._seq, event))
        self._seq += 1

    def _row(self, event: str, ip_id: str = "", state: str = "") -> None:
        if self.record_trace:
            self.trace.append(
                TraceRecord(
                    time=self.now,
                    ip_id=ip_id,
                    event=event,
                    state=state,
                    battery=self.battery.charge,
                    temperature=self.node.temperature,
                    energy=self._energy,
                )
            )

    def _ip_row(self, event: str, ip: IpRuntime) -> None:
        self._row(event, ip.ip_id, ip.state.value)

    def _classify(
        self, battery: Battery, node: ThermalNode
    ) -> Tuple[BatteryClass, TempClass]:
        t = self.scenario.thresholds
        return classify_battery(battery, t), classify_temperature(node, t)

    def _project(
        self, power: float, dt: float
    ) -> Tuple[Battery, ThermalNode, float, float]:
        node, area, peak = advance_temperature(self.node, power, dt)
        return drain(self.battery, power * dt), node, area, peak

    def _classes_after(
        self, power: float, dt: float
    ) -> Tuple[BatteryClass, TempClass]:
        t = self.scenario.thresholds
        temperature, _, _ = project_temperature(self.node, power, dt)
        if self.battery.source == BatterySource.POWER_SUPPLY:
            battery_class = BatteryClass.POWER_SUPPLY
        else:
            charge = max(0.0, self.battery.charge - power * dt)
            battery_class = classify_fraction(charge / self.battery.capacity, t)
        return battery_class, classify_degrees(temperature, t)

    def _advance(self, t: float) -> float:
        """
        Moves the environment forward to `t`, or to the first class crossing
        before it.  Returns the time reached.
        """
        dt = t - self.now
        if dt <= 0:
            return self.now
        power = sum(ip.power for ip in self.ips.values())
        battery, node, area, peak = self._project(power, dt)
        end = t

        if not self.baseline and self._classify(battery, node) != self._classes:
            with kev("bisect", t=t):
                lo, hi = 0.0, dt
                while hi - lo > RESOLUTION:
                    mid = (lo + hi) / 2
                    if self._classes_after(power, mid) != self._classes:
                        hi = mid
                    else:
                        lo = mid
            if hi < dt and self.now + hi < t:
                dt = hi
                end = self.now + hi
                battery, node, area, peak = self._project(power, dt)

        if self.battery.source == BatterySource.ON_BATTERY:
            if power * dt > self.battery.charge:
                self.clamped = True
        for ip in self.ips.values():
            if ip.power:
                ip.charges.append(ip.power * dt)
        self._energy += power * dt
        self.battery = battery
        self.node = node
        self._excess_area.append(area)
        self._peak = max(self._peak, peak)
        self.now = end
        return end

    def _charge_lump(self, ip: IpRuntime, energy: float) -> None:
        if energy <= 0:
            return
        if (
            self.battery.source == BatterySource.ON_BATTERY
            and energy > self.battery.charge
        ):
            self.clamped = True
        ip.charges.append(energy)
        self._energy += energy
        self.battery = drain(self.battery, energy)
        self.node = replace(
            self.node, temperature=self.node.temperature + energy / self.node.c_th
        )
        self._peak = max(self._peak, self.node.temperature)

    def _note_classes(self) -> None:
        if self.baseline:
            return
        classes = self._classify(self.battery, self.node)
        if classes != self._classes:
            LOG.debug(
                f"{self.now:.9f} class change "
                f"{self._classes[0].value}/{self._classes[1].value} -> "
                f"{classes[0].value}/{classes[1].value}"
            )
            self._classes = classes
            self._push(self.now, Event(EventKind.GEM_ARBITRATION))

    # -- workload

    def _schedule_next(self, ip: IpRuntime, nominal_end: float) -> None:
        gen = ip.generator
        if gen.max_tasks is not None and ip.issued >= gen.max_tasks:
            return
        task, _ = next_task(gen, ip.rng, nominal_end, ip.issued)
        ip.issued += 1
        if task.arrival_time < self.scenario.duration:
            self._push(task.arrival_time, Event(EventKind.TASK_ARRIVAL, ip.ip_id, task))

    # -- state changes

    def _start_transition(self, ip: IpRuntime, target: PowerState) -> None:
        cost = transition(ip.state, target, self.scenario.psm)
        ip.phase = Phase.TRANSITION
        ip.target = target
        if cost.delay > 0:
            ip.power = cost.energy / cost.delay
        else:
            ip.power = 0.0
            self._charge_lump(ip, cost.energy)
        self._push(
            self.now + cost.delay,
            Event(EventKind.TRANSITION_COMPLETE, ip.ip_id, state=target),
        )

    def _execute(self, ip: IpRuntime) -> None:
        assert ip.current is not None
        duration, energy = instruction_cost(
            ip.state, ip.current.cycles, self.scenario.psm
        )
        ip.phase = Phase.EXECUTING
        ip.power = energy / duration
        self._push(self.now + duration, Event(EventKind.TASK_COMPLETE, ip.ip_id))

    def _go_idle(self, ip: IpRuntime) -> None:
        ip.phase = Phase.IDLE
        ip.target = None
        ip.power = idle_power(ip.state, self.scenario.psm)

    def _try_start(self, ip: IpRuntime, enabled: bool) -> None:
        task = ip.queue[0]
        if (
            not enabled
            and ip.held == (task.task_id, "Deny")
            and ip.state == PowerState.SL1
        ):
            return
        if self.baseline:
            state = PowerState.ON1
        else:
            others = others_energy(self.ledger, ip.ip_id) if self.gem_present else 0.0
            state = decide_task_state(
                task,
                enabled,
                self.scenario.rules_for(ip.ip_id),
                others,
                self.battery,
                self.node,
                self.scenario.psm,
                self.scenario.thresholds,
            )

        if not state.is_on:
            # parked in the held state from wherever the PSM is, deeper sleep included
            label = "Defer" if enabled else "Deny"
            if ip.held != (task.task_id, label):
                ip.held = (task.task_id, label)
                self.held_tasks.add(task.task_id)
                self._ip_row(label, ip)
            if ip.state != state:
                self._start_transition(ip, state)
            return

        ip.queue.popleft()
        ip.current = task
        ip.held = None
        self._row("Grant", ip.ip_id, state.value)
        if self.gem_present:
            estimate = task_energy_estimate(task, state, self.scenario.psm)
            noise = self.scenario.lem.estimate_noise
            if noise > 0:
                estimate = noisy_estimate(estimate, noise, float(ip.noise_rng.random()))
            self.ledger = post_estimate(self.ledger, ip.ip_id, estimate)
        if state == ip.state:
            self._execute(ip)
        else:
            self._start_transition(ip, state)

    def _dispatch(self, force_arbitration: bool = False) -> None:
        requesters = [ip for ip in self.ips.values() if ip.requesting]
        if not self.gem_present:
            for ip in requesters:
                self._try_start(ip, True)
            return
        if not requesters and not force_arbitration:
            return

        battery_class, temp_class = self._classify(self.battery, self.node)
        key = (battery_class, temp_class, frozenset(ip.ip_id for ip in requesters))
        decision = self._decisions.get(key)
        if decision is None:
            decision = arbitrate(
                battery_class, temp_class, key[2], self.registrations, self.scenario.gem
            )
            self._decisions[key] = decision
        if decision.fan_on != self.node.fan_on:
            self.node = set_fan(self.node, decision.fan_on)
            self._row(EventKind.FAN_CHANGE.value, state="on" if decision.fan_on else "off")
        requesters.sort(key=lambda ip: (ip.generator.static_priority, ip.ip_id))
        for ip in requesters:
            self._try_start(ip, ip.ip_id in decision.enabled)

    # -- event handlers

    def _on_arrival(self, event: Event) -> None:
        ip = self.ips[event.ip_id]  # type: ignore
        task = event.task
        assert task is not None
        self._ip_row(EventKind.TASK_ARRIVAL.value, ip)
        self.arrivals += 1
        self._schedule_next(
            ip, task.arrival_time + task.cycles * self.scenario.psm.nominal_cycle_time
        )
        if ip.idle_since is not None:
            ip.predictor, predicted = predict_idle(
                ip.predictor, self.now - ip.idle_since
            )
            ip.idle_since = None
            LOG.debug(f"{ip.ip_id} predicted idle {predicted:.6e}")
        ip.queue.append(task)
        self._dispatch()

    def _on_transition_complete(self, event: Event) -> None:
        ip = self.ips[event.ip_id]  # type: ignore
        assert event.state is not None
        ip.state = event.state
        self._ip_row(EventKind.TRANSITION_COMPLETE.value, ip)
        if ip.current is not None:
            self._execute(ip)
            return
        self._go_idle(ip)
        if ip.queue:
            self._dispatch()

    def _on_task_complete(self, event: Event) -> None:
        ip = self.ips[event.ip_id]  # type: ignore
        task = ip.current
        assert task is not None
        self._ip_row(EventKind.TASK_COMPLETE.value, ip)
        self.latencies[task.task_id] = self.now - task.arrival_time
        self.completed += 1
        self.cycles += task.cycles
        ip.current = None
        if self.gem_present:
            self.ledger = clear_estimate(self.ledger, ip.ip_id)
        self._go_idle(ip)
        if not ip.queue:
            ip.idle_since = self.now
            self._push(self.now, Event(EventKind.IDLE_TIMEOUT, ip.ip_id))
        self._dispatch()

    def _on_idle_timeout(self, event: Event) -> None:
        ip = self.ips[event.ip_id]  # type: ignore
        if ip.phase != Phase.IDLE or ip.queue or ip.current is not None:
            return
        self._ip_row(EventKind.IDLE_TIMEOUT.value, ip)
        if self.baseline or not self.scenario.lem.idle_policy or not ip.state.is_on:
            return
        predicted = ip.predictor.predicted if ip.predictor.initialized else 0.0
        target = choose_idle_state(
            predicted, ip.state, self.scenario.psm, self.scenario.allow_off
        )
        if target != ip.state:
            LOG.debug(f"{ip.ip_id} idle {predicted:.6e}s -> {target.value}")
            self._start_transition(ip, target)

    def _on_class_change(self, event: Event) -> None:
        self._row(EventKind.GEM_ARBITRATION.value)
        self._dispatch(force_arbitration=True)

    # -- the loop

    def run(self) -> SimResult:
        duration = self.scenario.duration
        initial = self.battery
        self._push(duration, Event(EventKind.SIM_END))
        for ip in self.ips.values():
            self._schedule_next(ip, 0.0)
        if self.gem_present:
            self._dispatch(force_arbitration=True)

        handlers = {
            EventKind.TASK_ARRIVAL: self._on_arrival,
            EventKind.TRANSITION_COMPLETE: self._on_transition_complete,
            EventKind.TASK_COMPLETE: self._on_task_complete,
            EventKind.IDLE_TIMEOUT: self._on_idle_timeout,
            EventKind.GEM_ARBITRATION: self._on_class_change,
        }
        with kev("event_loop", baseline=self.baseline):
            while self._heap:
                t, seq, event = heapq.heappop(self._heap)
                reached = self._advance(t)
                if reached < t:
                    heapq.heappush(self._heap, (t, seq, event))
                    self._note_classes()
                    continue
                self.events += 1
                if event.kind == EventKind.SIM_END:
                    self._row(EventKind.SIM_END.value)
                    break
                handlers[event.kind](event)
                self._note_classes()

        return self._result(initial)

    def _result(self, initial: Battery) -> SimResult:
        ip_energy = {ip_id: math.fsum(ip.charges) for ip_id, ip in self.ips.items()}
        total = math.fsum(c for ip in self.ips.values() for c in ip.charges)
        if initial.source == BatterySource.ON_BATTERY and not self.clamped:
            drained = initial.charge - self.battery.charge
            if not math.isclose(drained, total, rel_tol=1e-9, abs_tol=1e-12):
                raise SimulationError(
                    f"{self.scenario.name}: battery drained {drained!r} J "
                    f"but {total!r} J were charged"
                )

        duration = self.scenario.duration
        mean_excess = math.fsum(self._excess_area) / duration
        ambient = self.scenario.thermal.ambient
        return SimResult(
            scenario=self.scenario.name,
            seed=self.scenario.seed,
            baseline=self.baseline,
            duration=duration,
            total_energy=total,
            ip_energy=ip_energy,
            ambient=ambient,
            mean_temperature=ambient + mean_excess,
            max_temperature=self._peak,
            mean_excess=mean_excess,
            latencies=self.latencies,
            arrivals=self.arrivals,
            completed=self.completed,
            pending=self.arrivals - self.completed,
            deferred=len(self.held_tasks),
            initial_charge=initial.charge,
            final_charge=self.battery.charge,
            events=self.events,
            cycles=self.cycles,
            trace=self.trace,
        )


@ktrace("scenario.name", "scenario.seed")
def run(scenario: Scenario, record_trace: bool = True) -> SimResult:
    LOG.info(f"run {scenario.name} seed={scenario.seed}")
    result = Simulation(scenario, record_trace=record_trace).run()
    LOG.info(
        f"run {scenario.name} done: {result.total_energy:.6f} J, "
        f"{result.completed}/{result.arrivals} tasks"
    )
    return result


@ktrace("scenario.name", "scenario.seed")
def run_baseline(scenario: Scenario, record_trace: bool = True) -> SimResult:
    """
    The same task streams executed at ON1 with no sleeping and no GEM.
    """
    LOG.info(f"baseline {scenario.name} seed={scenario.seed}")
    return Simulation(scenario, baseline=True, record_trace=record_trace).run()


def compute_metrics(dpm: SimResult, baseline: SimResult) -> Metrics:
    if baseline.total_energy <= 0:
        raise DegenerateBaseline(f"{baseline.scenario}: baseline energy is zero")
    if baseline.mean_excess <= 0:
        raise DegenerateBaseline(
            f"{baseline.scenario}: baseline never rises above ambient"
        )

    common = sorted(set(dpm.latencies) & set(baseline.latencies))
    if common:
        lat_dpm = math.fsum(dpm.latencies[k] for k in common) / len(common)
        lat_base = math.fsum(baseline.latencies[k] for k in common) / len(common)
        overhead = 100 * (lat_dpm - lat_base) / lat_base
    else:
        LOG.warning(f"{dpm.scenario}: no task completed in both runs")
        overhead = 0.0

    return Metrics(
        energy_saving_pct=100
        * (baseline.total_energy - dpm.total_energy)
        / baseline.total_energy,
        temp_reduction_pct=100
        * (baseline.mean_excess - dpm.mean_excess)
        / baseline.mean_excess,
        avg_delay_overhead_pct=overhead,
    )


def write_trace(records: Iterable[TraceRecord], fo: IO[str]) -> None:
    writer = csv.writer(fo, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in records:
        writer.writerow(
            (
                repr(r.time),
                r.ip_id,
                r.event,
                r.state,
                repr(r.battery),
                repr(r.temperature),
                repr(r.energy),
            )
        )
