from .acceptance import DeterminismTest, PresetAcceptanceTest, ScaleTest
from .cmdline import PresetCommandTest, RunTest, TableTest, ValidateTest
from .engine import (
    BaselineTest,
    GoldenTraceTest,
    MetricsTest,
    PolicyTest,
    SingleTaskTest,
)
from .environment import BatteryTest, ThermalTest, ValidateEnvironmentTest
from .gem import ArbitrateTest, LedgerTest
from .lem import (
    BreakEvenTest,
    ChooseIdleStateTest,
    DecideTaskStateTest,
    EstimateTest,
    ForecastTest,
    PredictIdleTest,
    RuleTableTest,
)
from .psm import InstructionCostTest, TransitionTest, ValidatePsmTest
from .scenario import ParseScenarioTest, PresetTest
from .workload import NextTaskTest, ValidateGeneratorTest

__all__ = [
    "ArbitrateTest",
    "BaselineTest",
    "BatteryTest",
    "BreakEvenTest",
    "ChooseIdleStateTest",
    "DecideTaskStateTest",
    "DeterminismTest",
    "EstimateTest",
    "ForecastTest",
    "GoldenTraceTest",
    "InstructionCostTest",
    "LedgerTest",
    "MetricsTest",
    "NextTaskTest",
    "ParseScenarioTest",
    "PolicyTest",
    "PredictIdleTest",
    "PresetAcceptanceTest",
    "PresetCommandTest",
    "PresetTest",
    "RuleTableTest",
    "RunTest",
    "ScaleTest",
    "SingleTaskTest",
    "TableTest",
    "ThermalTest",
    "TransitionTest",
    "ValidateEnvironmentTest",
    "ValidateGeneratorTest",
    "ValidatePsmTest",
    "ValidateTest",
]
