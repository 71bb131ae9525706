import unittest
from dataclasses import replace

from ..psm import (
    default_psm_config,
    idle_power,
    instruction_cost,
    NotExecutableState,
    ON_STATES,
    PowerState,
    RESTING_STATES,
    StateParams,
    transition,
    TransitionCost,
    triangle_violations,
    validate_psm_config,
    wake_cost,
)
from ..types import ConfigInvalid


class InstructionCostTest(unittest.TestCase):
    def test_on1_identity(self) -> None:
        cfg = default_psm_config()
        duration, energy = instruction_cost(PowerState.ON1, 10_000, cfg)
        self.assertAlmostEqual(5e-5, duration, delta=1e-18)
        self.assertAlmostEqual(5e-5, energy, delta=1e-18)

    def test_scaling(self) -> None:
        cfg = default_psm_config()
        duration, energy = instruction_cost(PowerState.ON4, 1000, cfg)
        self.assertAlmostEqual(1000 * 5e-9 / 0.4, duration, delta=1e-18)
        self.assertAlmostEqual(302.5 * 5e-9, energy, delta=1e-18)

    def test_linear_in_cycles(self) -> None:
        cfg = default_psm_config()
        pairs = [(1, 1), (1, 999_999), (10_000, 40_000), (123_457, 876_543), (0, 7)]
        for s in ON_STATES:
            for a, b in pairs:
                with self.subTest(state=s, a=a, b=b):
                    whole = instruction_cost(s, a + b, cfg)
                    part_a = instruction_cost(s, a, cfg)
                    part_b = instruction_cost(s, b, cfg)
                    for total, x, y in zip(whole, part_a, part_b):
                        # equal up to a few ulps of rounding
                        self.assertAlmostEqual(total, x + y, delta=1e-12 * total)

    def test_slower_states_take_longer_and_cost_less(self) -> None:
        cfg = default_psm_config()
        costs = [instruction_cost(s, 50_000, cfg) for s in ON_STATES]
        for (d1, e1), (d2, e2) in zip(costs, costs[1:]):
            self.assertLess(d1, d2)
            self.assertGreater(e1, e2)

    def test_zero_cycles(self) -> None:
        self.assertEqual(
            (0.0, 0.0), instruction_cost(PowerState.ON2, 0, default_psm_config())
        )

    def test_not_executable(self) -> None:
        cfg = default_psm_config()
        for s in RESTING_STATES:
            with self.assertRaises(NotExecutableState):
                instruction_cost(s, 1, cfg)


class TransitionTest(unittest.TestCase):
    def test_entry_plus_exit(self) -> None:
        cfg = default_psm_config()
        self.assertEqual(
            TransitionCost(5e-6, 3e-6), transition(PowerState.ON1, PowerState.SL2, cfg)
        )
        up = transition(PowerState.SL2, PowerState.ON1, cfg)
        self.assertAlmostEqual(1.2e-5, up.delay, delta=1e-18)
        self.assertAlmostEqual(9e-6, up.energy, delta=1e-18)

    def test_self_transition_is_free(self) -> None:
        cfg = default_psm_config()
        for s in PowerState:
            self.assertEqual(TransitionCost(), transition(s, s, cfg))

    def test_deeper_states_wake_slower(self) -> None:
        cfg = default_psm_config()
        wakes = [wake_cost(s, cfg) for s in RESTING_STATES]
        for a, b in zip(wakes, wakes[1:]):
            self.assertLess(a.delay, b.delay)
            self.assertLess(a.energy, b.energy)

    def test_idle_power(self) -> None:
        cfg = default_psm_config()
        self.assertEqual(0.0, idle_power(PowerState.OFF, cfg))
        self.assertEqual(0.25, idle_power(PowerState.ON1, cfg))
        self.assertEqual(0.002, idle_power(PowerState.SL4, cfg))


class ValidatePsmTest(unittest.TestCase):
    def test_defaults_are_clean(self) -> None:
        cfg = default_psm_config()
        self.assertEqual([], validate_psm_config(cfg))
        self.assertEqual([], triangle_violations(cfg))

    def _with_params(self, state: PowerState, params: StateParams) -> None:
        cfg = default_psm_config()
        new = dict(cfg.params)
        new[state] = params
        validate_psm_config(replace(cfg, params=new))

    def test_on_states_must_slow_down(self) -> None:
        with self.assertRaisesRegex(ConfigInvalid, r"^psm\.states\.ON3"):
            self._with_params(PowerState.ON3, StateParams(0.9, 0.6, 0.12))

    def test_on1_is_nominal(self) -> None:
        with self.assertRaisesRegex(ConfigInvalid, r"^psm\.states\.ON1"):
            self._with_params(PowerState.ON1, StateParams(1.0, 0.9, 0.25))

    def test_sleep_power_descends(self) -> None:
        with self.assertRaisesRegex(ConfigInvalid, r"^psm\.states\.SL3\.idle_power"):
            self._with_params(PowerState.SL3, StateParams(0.35, 0.0, 0.03))

    def test_only_off_has_zero_voltage(self) -> None:
        with self.assertRaisesRegex(ConfigInvalid, r"voltage_scale"):
            self._with_params(PowerState.SL4, StateParams(0.0, 0.0, 0.002))

    def test_sleep_cannot_clock(self) -> None:
        with self.assertRaisesRegex(ConfigInvalid, r"^psm\.states\.SL1\.freq_scale"):
            self._with_params(PowerState.SL1, StateParams(0.55, 0.1, 0.05))

    def test_negative_cost(self) -> None:
        cfg = default_psm_config()
        table = dict(cfg.transitions)
        table[(PowerState.ON2, PowerState.ON3)] = TransitionCost(-1e-6, 0.0)
        with self.assertRaisesRegex(ConfigInvalid, r"ON2\.ON3: negative"):
            validate_psm_config(replace(cfg, transitions=table))

    def test_wake_cost_order(self) -> None:
        cfg = default_psm_config()
        table = dict(cfg.transitions)
        table[(PowerState.SL3, PowerState.ON1)] = TransitionCost(1e-6, 1e-6)
        with self.assertRaisesRegex(ConfigInvalid, r"SL3\.ON1"):
            validate_psm_config(replace(cfg, transitions=table))

    def test_triangle_warning(self) -> None:
        cfg = default_psm_config()
        table = dict(cfg.transitions)
        table[(PowerState.ON1, PowerState.ON4)] = TransitionCost(1e-3, 1e-6)
        cfg = replace(cfg, transitions=table)
        self.assertIn(
            (PowerState.ON1, PowerState.ON2, PowerState.ON4), triangle_violations(cfg)
        )
        with self.assertLogs("dpmsim.psm", level="WARNING"):
            warnings = validate_psm_config(cfg)
        self.assertTrue(any(w.startswith("psm.transitions.ON1.ON4") for w in warnings))
