import json
import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import click
import numpy as np
from keke import ktrace

from .engine import compute_metrics, Metrics, run, run_baseline, SimResult
from .scenario import Scenario

LOG = logging.getLogger(__name__)

# Reference figures per preset (energy saving, temperature reduction, delay
# overhead, all %).  The workload behind them is unknown, so they are printed
# next to ours and never compared against.
REFERENCE: Mapping[str, Tuple[float, float, float]] = {
    "A1": (39, 31, 30),
    "A2": (55, 21, 339),
    "A3": (39, 18, 37),
    "A4": (55, 18, 339),
    "B": (65, 19, 242),
    "C": (64, 18, 253),
}
REFERENCE_LABEL = "non-reproducible-target"


def dataclass_default(obj: Any) -> Any:
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    elif isinstance(obj, Enum):
        return obj.value
    else:
        raise TypeError(obj)


@dataclass
class Totals:
    energy: float
    mean_temperature: float
    max_temperature: float
    arrivals: int
    completed: int
    pending: int
    deferred: int
    events: int
    cycles: int

    @classmethod
    def of(cls, result: SimResult) -> "Totals":
        return cls(
            energy=result.total_energy,
            mean_temperature=result.mean_temperature,
            max_temperature=result.max_temperature,
            arrivals=result.arrivals,
            completed=result.completed,
            pending=result.pending,
            deferred=result.deferred,
            events=result.events,
            cycles=result.cycles,
        )


@dataclass
class RunReport:
    scenario: str
    seed: int
    metrics: Metrics
    dpm: Totals
    baseline: Totals
    ip_energy: Dict[str, float]
    wall_seconds: float
    # Simulated kilocycles per wall-clock second, informational only.
    kcycles_per_second: float
    traces: List[str] = field(default_factory=list)


@dataclass
class PairResult:
    dpm: SimResult
    baseline: SimResult
    metrics: Metrics
    wall_seconds: float


@ktrace("scenario.name", "scenario.seed")
def run_pair(scenario: Scenario, record_trace: bool = True) -> PairResult:
    t0 = time.perf_counter()
    baseline = run_baseline(scenario, record_trace=record_trace)
    dpm = run(scenario, record_trace=record_trace)
    wall = time.perf_counter() - t0
    LOG.info(f"{scenario.name} seed={scenario.seed}: pair took {wall:.2f}s")
    return PairResult(dpm, baseline, compute_metrics(dpm, baseline), wall)


def build_report(pair: PairResult, traces: Sequence[str] = ()) -> RunReport:
    cycles = pair.dpm.cycles + pair.baseline.cycles
    return RunReport(
        scenario=pair.dpm.scenario,
        seed=pair.dpm.seed,
        metrics=pair.metrics,
        dpm=Totals.of(pair.dpm),
        baseline=Totals.of(pair.baseline),
        ip_energy={str(k): v for k, v in pair.dpm.ip_energy.items()},
        wall_seconds=pair.wall_seconds,
        kcycles_per_second=(
            cycles / 1000 / pair.wall_seconds if pair.wall_seconds > 0 else 0.0
        ),
        traces=list(traces),
    )


def report_json(report: RunReport) -> str:
    return json.dumps(report, default=dataclass_default, indent=2, sort_keys=True)


def print_run_report(report: RunReport) -> None:
    m = report.metrics
    click.secho(f"{report.scenario} seed={report.seed}", bold=True)
    click.echo(f"  energy saving       {m.energy_saving_pct:8.2f} %")
    click.echo(f"  temp reduction      {m.temp_reduction_pct:8.2f} %")
    click.echo(f"  delay overhead      {m.avg_delay_overhead_pct:8.2f} %")
    for label, t in (("dpm", report.dpm), ("baseline", report.baseline)):
        click.echo(
            f"  {label:<9} {t.energy:.6f} J  mean {t.mean_temperature:.2f} C  "
            f"max {t.max_temperature:.2f} C  "
            f"tasks {t.completed}/{t.arrivals} ({t.deferred} held)"
        )
    for ip, energy in sorted(report.ip_energy.items()):
        click.echo(f"    {ip:<8} {energy:.6f} J")
    click.echo(
        f"  {report.kcycles_per_second:.1f} Kcycle/s simulated "
        f"({report.wall_seconds:.2f}s wall)"
    )
    if report.dpm.pending:
        click.secho(
            f"  {report.dpm.pending} tasks still pending at end of run", fg="yellow"
        )
    for path in report.traces:
        click.secho(f"  wrote {path}", fg="green")


@dataclass
class TableRow:
    preset: str
    seeds: List[int]
    mean: Tuple[float, float, float]
    std: Tuple[float, float, float]
    reference: Optional[Tuple[float, float, float]]


def aggregate(reports: Iterable[RunReport]) -> List[TableRow]:
    by_preset: Dict[str, List[RunReport]] = {}
    for r in sorted(reports, key=lambda r: (r.scenario, r.seed)):
        by_preset.setdefault(r.scenario, []).append(r)

    rows = []
    for preset, group in by_preset.items():
        values = np.array(
            [
                (
                    r.metrics.energy_saving_pct,
                    r.metrics.temp_reduction_pct,
                    r.metrics.avg_delay_overhead_pct,
                )
                for r in group
            ],
            dtype=float,
        )
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        rows.append(
            TableRow(
                preset=preset,
                seeds=[r.seed for r in group],
                mean=(float(mean[0]), float(mean[1]), float(mean[2])),
                std=(float(std[0]), float(std[1]), float(std[2])),
                reference=REFERENCE.get(preset),
            )
        )
    return rows


def table_json(rows: Sequence[TableRow]) -> str:
    doc = {
        "reference_label": REFERENCE_LABEL,
        "columns": ["energy_saving_pct", "temp_reduction_pct", "avg_delay_overhead_pct"],
        "rows": rows,
    }
    return json.dumps(doc, default=dataclass_default, indent=2, sort_keys=True)


def print_table(rows: Sequence[TableRow]) -> None:
    click.secho(
        f"{'':<6}{'energy saving %':>20}{'temp reduction %':>20}"
        f"{'delay overhead %':>22}   {REFERENCE_LABEL}",
        bold=True,
    )
    for row in rows:
        cells = "".join(
            f"{f'{mu:.1f} ± {sd:.1f}':>{width}}"
            for mu, sd, width in zip(row.mean, row.std, (20, 20, 22))
        )
        ref = (
            "/".join(f"{x:g}" for x in row.reference)
            if row.reference is not None
            else "-"
        )
        click.echo(f"{row.preset:<6}{cells}   {ref}")
