"""
Traffic generators standing in for the IP blocks.
"""

import enum
import hashlib
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from .lem import PriorityClass
from .types import ConfigInvalid, IpId

MASK64 = (1 << 64) - 1


class Activity(enum.Enum):
    HIGH = "high"
    LOW = "low"


# Idle gap bounds in seconds.
ACTIVITY_IDLE: Mapping[Activity, Tuple[float, float]] = {
    Activity.HIGH: (1e-4, 1e-3),
    Activity.LOW: (2e-3, 2e-2),
}
DEFAULT_CYCLES = (10_000, 100_000)
UNIFORM_MIX: Tuple[Tuple[PriorityClass, float], ...] = tuple(
    (p, 0.25) for p in PriorityClass
)


@dataclass(frozen=True)
class Task:
    task_id: str
    ip_id: IpId
    cycles: int
    priority: PriorityClass
    arrival_time: float


@dataclass(frozen=True)
class TrafficGenerator:
    ip_id: IpId
    static_priority: int = 1
    activity: Optional[Activity] = Activity.HIGH
    cycles: Tuple[int, int] = DEFAULT_CYCLES
    idle: Tuple[float, float] = ACTIVITY_IDLE[Activity.HIGH]
    priority_mix: Tuple[Tuple[PriorityClass, float], ...] = UNIFORM_MIX
    seed: int = 0
    max_tasks: Optional[int] = None


def validate_generator(gen: TrafficGenerator, where: str) -> None:
    lo, hi = gen.cycles
    if lo <= 0 or lo > hi:
        raise ConfigInvalid(f"{where}.cycles: need 0 < min <= max")
    lo_i, hi_i = gen.idle
    if lo_i < 0 or lo_i > hi_i:
        raise ConfigInvalid(f"{where}.idle: need 0 <= min <= max")
    weights = [w for _, w in gen.priority_mix]
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigInvalid(f"{where}.priority_mix: weights must sum to 1")
    if gen.static_priority < 1:
        raise ConfigInvalid(f"{where}.static_priority: must be >= 1")
    if gen.max_tasks is not None and gen.max_tasks < 0:
        raise ConfigInvalid(f"{where}.max_tasks: must be >= 0")


def ip_hash(ip_id: str) -> int:
    return int.from_bytes(hashlib.sha256(ip_id.encode("utf-8")).digest()[:8], "big")


def derive_seed(master_seed: int, gen: TrafficGenerator) -> int:
    return (master_seed ^ gen.seed ^ ip_hash(gen.ip_id)) & MASK64


def make_rng(master_seed: int, gen: TrafficGenerator) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, gen)))


def next_task(
    gen: TrafficGenerator, rng: np.random.Generator, now: float, index: int
) -> Tuple[Task, float]:
    """
    Draws the next task.  `now` is when the generator's previous task would
    have finished at the nominal clock (0 for the first task); the task arrives
    one idle gap later.  Returns (task, idle_gap) and advances `rng`.

    Per task the stream is consumed as: idle gap, cycle count (inclusive
    bounds), then one uniform double against the cumulative L, M, H, V weights.
    """
    gap = float(rng.uniform(gen.idle[0], gen.idle[1]))
    cycles = int(rng.integers(gen.cycles[0], gen.cycles[1], endpoint=True))
    u = float(rng.random())
    priority = gen.priority_mix[-1][0]
    acc = 0.0
    for p, w in gen.priority_mix:
        acc += w
        if u < acc:
            priority = p
            break
    task = Task(
        task_id=f"{gen.ip_id}-{index}",
        ip_id=gen.ip_id,
        cycles=cycles,
        priority=priority,
        arrival_time=now + gap,
    )
    return task, gap
