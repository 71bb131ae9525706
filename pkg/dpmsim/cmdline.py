import contextlib
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterator, IO, List, Optional, Tuple

import click
import keke

from .engine import DegenerateBaseline, write_trace
from .presets import PRESETS, preset_document, scenario_preset, UnknownScenario
from .report import (
    aggregate,
    build_report,
    print_run_report,
    print_table,
    report_json,
    run_pair,
    RunReport,
    table_json,
)
from .scenario import dumps_document, load_scenario, Scenario, scenario_warnings
from .types import ConfigInvalid

try:
    from .__version__ import version as __version__
except ImportError:
    __version__ = "dev"


@contextlib.contextmanager
def _input_errors() -> Iterator[None]:
    """
    Bad input exits 2, I/O failures exit 3.  Anything else is a bug and
    propagates.
    """
    try:
        yield
    except (ConfigInvalid, DegenerateBaseline, UnknownScenario) as e:
        msg = e.args[0] if isinstance(e, UnknownScenario) else str(e)
        prefix = "unknown scenario: " if isinstance(e, UnknownScenario) else ""
        click.secho(f"Error: {prefix}{msg}", fg="red", err=True)
        sys.exit(2)
    except OSError as e:
        click.secho(f"Error: {e}", fg="red", err=True)
        sys.exit(3)


def _parse_list(value: str, option: str) -> List[str]:
    items = [x.strip() for x in value.split(",") if x.strip()]
    if not items:
        raise click.UsageError(f"{option} needs at least one value")
    return items


def _parse_seeds(value: str) -> List[int]:
    try:
        return [int(x) for x in _parse_list(value, "--seeds")]
    except ValueError:
        raise click.UsageError(f"--seeds: not a list of integers: {value!r}")


@click.group()
@click.pass_context
@click.option(
    "--trace", type=click.File("w"), help="Write chrome trace to this filename"
)
@click.option("--verbose", is_flag=True, help="Verbose logging")
@click.version_option(__version__)
def cli(ctx: click.Context, trace: Optional[IO[str]], verbose: bool) -> None:
    if trace:
        ctx.with_resource(keke.TraceOutput(trace))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)


@cli.command(help="Run a scenario and its baseline, write traces and a report")
@click.option("--preset", help="Embedded scenario name (see `preset list`)")
@click.option(
    "--scenario", "scenario_option", metavar="PATH", help="Scenario file, - for stdin"
)
@click.option("--seed", type=int, help="Override the scenario's master seed")
@click.option("--out", "-o", default=".", help="Output directory")
@click.option("--no-trace", is_flag=True, help="Skip the CSV traces")
@click.argument("scenario_path", required=False)
def run(
    preset: Optional[str],
    scenario_option: Optional[str],
    seed: Optional[int],
    out: str,
    no_trace: bool,
    scenario_path: Optional[str],
) -> None:
    sources = [x for x in (preset, scenario_option, scenario_path) if x is not None]
    if len(sources) != 1:
        raise click.UsageError("give exactly one of --preset NAME or --scenario PATH")

    with _input_errors():
        if preset is not None:
            scenario = scenario_preset(preset)
        else:
            scenario = load_scenario(sources[0])
        if seed is not None:
            scenario = replace(scenario, seed=seed)

        pair = run_pair(scenario, record_trace=not no_trace)

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if not no_trace:
            for suffix, result in (("dpm", pair.dpm), ("base", pair.baseline)):
                path = out_dir / f"{scenario.name}.{suffix}.csv"
                with keke.kev("write_trace", path=str(path)):
                    with open(path, "w", newline="", encoding="utf-8") as fo:
                        write_trace(result.trace, fo)
                written.append(str(path))
        report = build_report(pair, written)
        report_path = out_dir / f"{scenario.name}.report.json"
        report_path.write_text(report_json(report) + "\n", encoding="utf-8")
        report.traces.append(str(report_path))

    print_run_report(report)


def _table_job(job: Tuple[str, int]) -> RunReport:
    name, seed = job
    scenario = replace(scenario_preset(name), seed=seed)
    return build_report(run_pair(scenario, record_trace=False))


@cli.command(help="Aggregate metrics over presets and seeds")
@click.option("--seeds", required=True, help="Comma separated master seeds")
@click.option(
    "--presets", default=",".join(PRESETS), help="Comma separated preset names"
)
@click.option("--threads", default=1, type=int, help="Parallel simulations")
@click.option("--out", "-o", type=click.File("w"), help="Also write JSON here")
def table(seeds: str, presets: str, threads: int, out: Optional[IO[str]]) -> None:
    seed_list = _parse_seeds(seeds)
    names = _parse_list(presets, "--presets")
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")

    jobs = [(name, seed) for name in names for seed in seed_list]
    reports = []
    with _input_errors():
        for name in names:
            if name not in PRESETS:
                raise UnknownScenario(name)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_table_job, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    reports.append(fut.result())
                except Exception:
                    click.secho(
                        f"Error: {job[0]} seed {job[1]} failed", fg="red", err=True
                    )
                    for f in futures:
                        f.cancel()
                    raise

    rows = aggregate(reports)
    print_table(rows)
    if out:
        out.write(table_json(rows) + "\n")


@cli.group(help="Embedded scenarios")
def preset() -> None:
    pass


@preset.command(name="list", help="List embedded scenarios")
def preset_list() -> None:
    for name, description in PRESETS.items():
        click.echo(f"{name:<4} {description}")


@preset.command(help="Print an embedded scenario document")
@click.argument("name")
def dump(name: str) -> None:
    with _input_errors():
        doc = preset_document(name)
    click.echo(dumps_document(doc), nl=False)


@cli.command(help="Check a scenario document without running it")
@click.argument("scenario_path")
def validate(scenario_path: str) -> None:
    with _input_errors():
        scenario: Scenario = load_scenario(scenario_path)
        warnings = scenario_warnings(scenario)
    for w in warnings:
        click.secho(f"warning: {w}", fg="yellow")
    click.secho(
        f"{scenario.name}: ok ({len(scenario.generators)} generators)", fg="green"
    )
