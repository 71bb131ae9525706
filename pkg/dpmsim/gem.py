import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping

from .environment import BatteryClass, NegativeEnergy, TempClass
from .types import IpId

LOG = logging.getLogger(__name__)


class UnknownIp(KeyError):
    pass


class Branch(enum.IntEnum):
    ENABLE_ALL = 1
    HIGH_PRIORITY_ONLY = 2
    SHUTDOWN = 3


@dataclass(frozen=True)
class IpRegistration:
    ip_id: IpId
    static_priority: int  # 1 is highest


@dataclass(frozen=True)
class GemConfig:
    present: bool = False
    high_priority_threshold: int = 2


@dataclass(frozen=True)
class GemDecision:
    enabled: FrozenSet[IpId]
    forced_sleep1: FrozenSet[IpId]
    fan_on: bool
    branch: Branch


@dataclass(frozen=True)
class EnergyLedger:
    registered: FrozenSet[IpId]
    entries: Mapping[IpId, float] = field(default_factory=dict)


_PLENTY = (
    BatteryClass.MEDIUM,
    BatteryClass.HIGH,
    BatteryClass.FULL,
    BatteryClass.POWER_SUPPLY,
)
_SCARCE = (BatteryClass.EMPTY, BatteryClass.LOW)
_COOL = (TempClass.LOW, TempClass.MEDIUM)


def select_branch(battery: BatteryClass, temperature: TempClass) -> Branch:
    if temperature in _COOL:
        if battery in _PLENTY:
            return Branch.ENABLE_ALL
        if battery in _SCARCE:
            return Branch.HIGH_PRIORITY_ONLY
    return Branch.SHUTDOWN


def arbitrate(
    battery: BatteryClass,
    temperature: TempClass,
    requesters: Iterable[IpId],
    registrations: Mapping[IpId, IpRegistration],
    config: GemConfig,
) -> GemDecision:
    requesting = frozenset(requesters)
    for ip in requesting:
        if ip not in registrations:
            raise UnknownIp(ip)

    branch = select_branch(battery, temperature)
    if branch == Branch.ENABLE_ALL:
        enabled = requesting
    elif branch == Branch.HIGH_PRIORITY_ONLY:
        enabled = frozenset(
            ip
            for ip in requesting
            if registrations[ip].static_priority <= config.high_priority_threshold
        )
    else:
        enabled = frozenset()

    decision = GemDecision(
        enabled=enabled,
        forced_sleep1=requesting - enabled,
        fan_on=branch == Branch.SHUTDOWN,
        branch=branch,
    )
    LOG.debug(
        f"arbitrate {battery.value}/{temperature.value} branch={branch.value} "
        f"enabled={sorted(decision.enabled)} forced={sorted(decision.forced_sleep1)}"
    )
    return decision


def others_energy(ledger: EnergyLedger, ip_id: IpId) -> float:
    if ip_id not in ledger.registered:
        raise UnknownIp(ip_id)
    return sum(e for k, e in sorted(ledger.entries.items()) if k != ip_id)


def post_estimate(ledger: EnergyLedger, ip_id: IpId, energy: float) -> EnergyLedger:
    if energy < 0:
        raise NegativeEnergy(f"estimate {energy} J for {ip_id}")
    if ip_id not in ledger.registered:
        raise UnknownIp(ip_id)
    entries: Dict[IpId, float] = dict(ledger.entries)
    entries[ip_id] = energy
    return EnergyLedger(ledger.registered, entries)


def clear_estimate(ledger: EnergyLedger, ip_id: IpId) -> EnergyLedger:
    if ip_id not in ledger.entries:
        return ledger
    entries = {k: v for k, v in ledger.entries.items() if k != ip_id}
    return EnergyLedger(ledger.registered, entries)
