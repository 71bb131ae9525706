import math
import unittest

from ..environment import (
    advance_temperature,
    Battery,
    BatteryClass,
    BatterySource,
    classify_battery,
    classify_temperature,
    ClassThresholds,
    drain,
    NegativeEnergy,
    set_fan,
    step_temperature,
    TempClass,
    ThermalNode,
    UnstableStep,
    validate_environment,
)
from ..types import ConfigInvalid


class BatteryTest(unittest.TestCase):
    def test_drain(self) -> None:
        self.assertEqual(70.0, drain(Battery(100.0, 100.0), 30.0).charge)
        self.assertEqual(0.0, drain(Battery(100.0, 10.0), 30.0).charge)

    def test_power_supply_is_constant(self) -> None:
        b = Battery(100.0, 40.0, BatterySource.POWER_SUPPLY)
        self.assertEqual(b, drain(b, 30.0))

    def test_negative(self) -> None:
        with self.assertRaises(NegativeEnergy):
            drain(Battery(100.0, 50.0), -1.0)

    def test_classes(self) -> None:
        t = ClassThresholds()
        cases = [
            (0.0, BatteryClass.EMPTY),
            (0.049, BatteryClass.EMPTY),
            (0.05, BatteryClass.LOW),
            (0.15, BatteryClass.LOW),
            (0.25, BatteryClass.MEDIUM),
            (0.5, BatteryClass.HIGH),
            (0.8, BatteryClass.FULL),
            (0.9, BatteryClass.FULL),
            (1.0, BatteryClass.FULL),
        ]
        for fraction, expected in cases:
            with self.subTest(fraction=fraction):
                self.assertEqual(
                    expected, classify_battery(Battery(100.0, fraction * 100.0), t)
                )
        self.assertEqual(
            BatteryClass.POWER_SUPPLY,
            classify_battery(Battery(100.0, 0.0, BatterySource.POWER_SUPPLY), t),
        )

    def test_classes_are_monotone(self) -> None:
        t = ClassThresholds()
        order = list(BatteryClass)
        prev = 0
        for i in range(101):
            idx = order.index(classify_battery(Battery(100.0, float(i)), t))
            self.assertGreaterEqual(idx, prev)
            prev = idx


class ThermalTest(unittest.TestCase):
    def test_single_euler_step(self) -> None:
        node = ThermalNode(temperature=25.0, ambient=25.0, r_th=10.0, c_th=50.0)
        self.assertAlmostEqual(25.04, step_temperature(node, 2.0, 1.0).temperature)

    def test_equilibrium(self) -> None:
        node = ThermalNode(temperature=25.0)
        self.assertEqual(25.0, step_temperature(node, 0.0, 1e-3).temperature)

    def test_unstable(self) -> None:
        node = ThermalNode(temperature=25.0)
        with self.assertRaises(UnstableStep):
            step_temperature(node, 1.0, node.max_step * 2)

    def test_converges_to_steady_state(self) -> None:
        node = ThermalNode(temperature=25.0)
        tau = node.r_th * node.c_th
        end, _, _ = advance_temperature(node, 1.5, 10 * tau)
        expected = node.ambient + 1.5 * node.r_th
        self.assertLess(abs(end.temperature - expected), 0.01 * (expected - 25.0))

    def test_matches_euler_steps(self) -> None:
        node = ThermalNode(temperature=30.0)
        duration = 0.037
        n = math.ceil(duration / node.max_step)
        stepped = node
        peak = node.temperature
        for _ in range(n):
            stepped = step_temperature(stepped, 1.2, duration / n)
            peak = max(peak, stepped.temperature)
        end, _, top = advance_temperature(node, 1.2, duration)
        self.assertEqual(stepped, end)
        self.assertEqual(peak, top)

    def test_fan_halves_excess(self) -> None:
        off = ThermalNode(temperature=25.0)
        on = set_fan(off, True)
        tau = off.r_th * off.c_th
        end_off, _, _ = advance_temperature(off, 2.0, 10 * tau)
        end_on, _, _ = advance_temperature(on, 2.0, 10 * tau)
        ratio = (end_on.temperature - 25.0) / (end_off.temperature - 25.0)
        self.assertAlmostEqual(0.5, ratio, delta=0.005)

    def test_fan_factor_one_is_a_noop(self) -> None:
        node = ThermalNode(temperature=50.0, fan_factor=1.0)
        a, _, _ = advance_temperature(node, 1.0, 0.05)
        b, _, _ = advance_temperature(set_fan(node, True), 1.0, 0.05)
        self.assertEqual(a.temperature, b.temperature)

    def test_fan_toggle(self) -> None:
        node = ThermalNode(temperature=50.0)
        self.assertEqual(node, set_fan(set_fan(node, True), False))

    def test_never_below_ambient(self) -> None:
        node = ThermalNode(temperature=90.0)
        end, area, peak = advance_temperature(node, 0.0, 1.0)
        self.assertGreaterEqual(end.temperature, node.ambient)
        self.assertGreater(area, 0.0)
        self.assertEqual(90.0, peak)

    def test_step_halving_converges(self) -> None:
        node = ThermalNode(temperature=30.0)
        dt = node.max_step
        full = step_temperature(node, 1.0, dt).temperature
        half = step_temperature(step_temperature(node, 1.0, dt / 2), 1.0, dt / 2)
        quarter = node
        for _ in range(4):
            quarter = step_temperature(quarter, 1.0, dt / 4)
        # Euler error shrinks linearly with the step
        e1 = abs(full - quarter.temperature)
        e2 = abs(half.temperature - quarter.temperature)
        self.assertLess(e2, e1)

    def test_temperature_classes(self) -> None:
        t = ClassThresholds()
        self.assertEqual(TempClass.LOW, classify_temperature(ThermalNode(59.9), t))
        self.assertEqual(TempClass.MEDIUM, classify_temperature(ThermalNode(60.0), t))
        self.assertEqual(TempClass.MEDIUM, classify_temperature(ThermalNode(84.9), t))
        self.assertEqual(TempClass.HIGH, classify_temperature(ThermalNode(85.0), t))
        self.assertEqual(TempClass.HIGH, classify_temperature(ThermalNode(120.0), t))


class ValidateEnvironmentTest(unittest.TestCase):
    def test_defaults(self) -> None:
        validate_environment(Battery(100.0, 90.0), ThermalNode(40.0), ClassThresholds())

    def test_errors(self) -> None:
        cases = [
            (Battery(0.0, 0.0), ThermalNode(40.0), ClassThresholds(), "capacity"),
            (Battery(100.0, 120.0), ThermalNode(40.0), ClassThresholds(), "charge"),
            (
                Battery(100.0, 50.0),
                ThermalNode(40.0, c_th=0.0),
                ClassThresholds(),
                "thermal",
            ),
            (
                Battery(100.0, 50.0),
                ThermalNode(40.0),
                ClassThresholds((0.05, 0.5, 0.25, 0.8)),
                "thresholds.battery",
            ),
            (
                Battery(100.0, 50.0),
                ThermalNode(40.0),
                ClassThresholds(temp_bounds=(85.0, 60.0)),
                "thresholds.temperature",
            ),
            (
                Battery(100.0, 50.0),
                ThermalNode(10.0),
                ClassThresholds(),
                "below ambient",
            ),
        ]
        for battery, node, thresholds, field in cases:
            with self.subTest(field=field):
                with self.assertRaisesRegex(ConfigInvalid, field):
                    validate_environment(battery, node, thresholds)
