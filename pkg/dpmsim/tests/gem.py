import unittest

from ..environment import BatteryClass, NegativeEnergy, TempClass
from ..gem import (
    arbitrate,
    Branch,
    clear_estimate,
    EnergyLedger,
    GemConfig,
    IpRegistration,
    others_energy,
    post_estimate,
    select_branch,
    UnknownIp,
)
from ..types import IpId

IPS = [IpId(f"ip{i}") for i in range(1, 5)]
REGISTRATIONS = {ip: IpRegistration(ip, i) for i, ip in enumerate(IPS, start=1)}


class ArbitrateTest(unittest.TestCase):
    def test_all_18_pairs(self) -> None:
        expected = {
            (BatteryClass.EMPTY, TempClass.LOW): Branch.HIGH_PRIORITY_ONLY,
            (BatteryClass.LOW, TempClass.LOW): Branch.HIGH_PRIORITY_ONLY,
            (BatteryClass.EMPTY, TempClass.MEDIUM): Branch.HIGH_PRIORITY_ONLY,
            (BatteryClass.LOW, TempClass.MEDIUM): Branch.HIGH_PRIORITY_ONLY,
        }
        for b in (
            BatteryClass.MEDIUM,
            BatteryClass.HIGH,
            BatteryClass.FULL,
            BatteryClass.POWER_SUPPLY,
        ):
            for t in (TempClass.LOW, TempClass.MEDIUM):
                expected[(b, t)] = Branch.ENABLE_ALL
        for b in BatteryClass:
            expected[(b, TempClass.HIGH)] = Branch.SHUTDOWN
        self.assertEqual(18, len(expected))

        for (b, t), branch in expected.items():
            with self.subTest(b=b.value, t=t.value):
                self.assertEqual(branch, select_branch(b, t))
                d = arbitrate(b, t, IPS, REGISTRATIONS, GemConfig(present=True))
                self.assertEqual(branch, d.branch)
                self.assertEqual(branch == Branch.SHUTDOWN, d.fan_on)
                self.assertEqual(frozenset(IPS), d.enabled | d.forced_sleep1)
                self.assertFalse(d.enabled & d.forced_sleep1)

    def test_examples(self) -> None:
        cfg = GemConfig(present=True, high_priority_threshold=2)
        d = arbitrate(BatteryClass.MEDIUM, TempClass.LOW, IPS, REGISTRATIONS, cfg)
        self.assertEqual(frozenset(IPS), d.enabled)
        self.assertFalse(d.fan_on)

        d = arbitrate(BatteryClass.LOW, TempClass.MEDIUM, IPS, REGISTRATIONS, cfg)
        self.assertEqual({"ip1", "ip2"}, d.enabled)
        self.assertEqual({"ip3", "ip4"}, d.forced_sleep1)
        self.assertFalse(d.fan_on)

        d = arbitrate(BatteryClass.FULL, TempClass.HIGH, IPS[:1], REGISTRATIONS, cfg)
        self.assertEqual(frozenset(), d.enabled)
        self.assertTrue(d.fan_on)

    def test_threshold(self) -> None:
        cfg = GemConfig(present=True, high_priority_threshold=3)
        d = arbitrate(BatteryClass.EMPTY, TempClass.LOW, IPS, REGISTRATIONS, cfg)
        self.assertEqual({"ip1", "ip2", "ip3"}, d.enabled)

    def test_priority_monotone(self) -> None:
        cfg = GemConfig(present=True)
        for subset in ([IPS[1], IPS[3]], [IPS[0], IPS[2]], IPS):
            d = arbitrate(BatteryClass.LOW, TempClass.LOW, subset, REGISTRATIONS, cfg)
            for a in d.enabled:
                for b in subset:
                    if REGISTRATIONS[b].static_priority < REGISTRATIONS[a].static_priority:
                        self.assertIn(b, d.enabled)

    def test_no_requesters(self) -> None:
        d = arbitrate(
            BatteryClass.LOW, TempClass.HIGH, [], REGISTRATIONS, GemConfig(present=True)
        )
        self.assertEqual(frozenset(), d.enabled | d.forced_sleep1)
        self.assertTrue(d.fan_on)

    def test_unknown(self) -> None:
        with self.assertRaises(UnknownIp):
            arbitrate(
                BatteryClass.FULL,
                TempClass.LOW,
                [IpId("ip9")],
                REGISTRATIONS,
                GemConfig(present=True),
            )


class LedgerTest(unittest.TestCase):
    def setUp(self) -> None:
        self.empty = EnergyLedger(frozenset(IPS))

    def test_others(self) -> None:
        ledger = post_estimate(self.empty, IPS[0], 5.0)
        ledger = post_estimate(ledger, IPS[1], 3.0)
        ledger = post_estimate(ledger, IPS[2], 2.0)
        self.assertEqual(5.0, others_energy(ledger, IPS[0]))
        self.assertEqual(8.0, others_energy(ledger, IPS[2]))
        self.assertEqual(10.0, others_energy(ledger, IPS[3]))

    def test_own_only_and_empty(self) -> None:
        self.assertEqual(0.0, others_energy(self.empty, IPS[0]))
        ledger = post_estimate(self.empty, IPS[0], 4.0)
        self.assertEqual(0.0, others_energy(ledger, IPS[0]))

    def test_post_then_clear(self) -> None:
        ledger = post_estimate(self.empty, IPS[0], 4.0)
        self.assertEqual(self.empty, clear_estimate(ledger, IPS[0]))
        self.assertEqual(self.empty, clear_estimate(self.empty, IPS[0]))

    def test_post_replaces(self) -> None:
        ledger = post_estimate(self.empty, IPS[0], 4.0)
        ledger = post_estimate(ledger, IPS[0], 1.0)
        self.assertEqual(1.0, others_energy(ledger, IPS[1]))

    def test_errors(self) -> None:
        with self.assertRaises(NegativeEnergy):
            post_estimate(self.empty, IPS[0], -1.0)
        with self.assertRaises(UnknownIp):
            post_estimate(self.empty, IpId("ip9"), 1.0)
        with self.assertRaises(UnknownIp):
            others_energy(self.empty, IpId("ip9"))
