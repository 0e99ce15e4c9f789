"""Command-line front door: run ensembles, score, export, report, serve.

Every command is a thin composition of library calls; printed tables carry
the same numbers the library returns.  Exit codes: 0 on success, 2 for
input/validation problems (bad weights, malformed scenarios, missing
files), 1 for runtime failures.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import ENGINE_VERSION
from .decision import (
    WEIGHT_PRESETS,
    WeightError,
    critical_weight,
    grouped_points,
    non_dominated_mask,
    validate_weights,
)
from .ensemble import run_ensemble
from .scenario import (
    ScenarioError,
    default_scenario,
    default_scenario_text,
    load_scenario,
)
from .store import (
    ResultStore,
    StoreError,
    default_partition,
    export_rows,
    write_export,
)

DATA_DIR_ENV = "EPIDECIDE_DATA_DIR"
DEFAULT_DATA_DIR = "epidecide-data"

WEIGHTS_HELP = (
    "Preset name (covid-only, covid-cancer, equal, custom-0.45) or three "
    "comma-separated weights summing to 1."
)


def parse_weights(text: str) -> tuple[float, float, float]:
    if text in WEIGHT_PRESETS:
        return WEIGHT_PRESETS[text]
    try:
        parts = tuple(float(piece) for piece in text.split(","))
    except ValueError:
        raise click.UsageError(f"cannot parse weights {text!r}; {WEIGHTS_HELP}")
    try:
        validate_weights(parts)
    except WeightError as exc:
        raise click.UsageError(str(exc))
    return parts


def resolve_scenario(path: str):
    if path == "default":
        return default_scenario()
    try:
        return load_scenario(path)
    except FileNotFoundError as exc:
        raise click.UsageError(str(exc))
    except ScenarioError as exc:
        raise click.UsageError(f"invalid scenario: {exc}")


def open_store(data_dir: str | None) -> ResultStore:
    root = data_dir or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR
    return ResultStore(root)


def load_run_or_fail(store: ResultStore, run_id: str):
    try:
        return store.load_run(run_id)
    except StoreError as exc:
        raise click.UsageError(str(exc))


def format_table(rows, columns, precision=2) -> str:
    def fmt(value):
        if isinstance(value, float):
            return f"{value:,.{precision}f}"
        return str(value)

    rendered = [[fmt(row[c]) for c in columns] for row in rows]
    widths = [
        max(len(col), *(len(line[i]) for line in rendered)) if rendered else len(col)
        for i, col in enumerate(columns)
    ]
    header = "  ".join(col.rjust(w) for col, w in zip(columns, widths))
    body = (
        "  ".join(cell.rjust(w) for cell, w in zip(line, widths)) for line in rendered
    )
    return "\n".join([header, *body])


def echo_rows(rows, machine: bool):
    from .store import EXPORT_COLUMNS

    if machine:
        click.echo(",".join(EXPORT_COLUMNS))
        for row in rows:
            click.echo(
                ",".join(
                    [row["strategy"]] + [repr(row[c]) for c in EXPORT_COLUMNS[1:]]
                )
            )
    else:
        click.echo(format_table(rows, EXPORT_COLUMNS))


@click.group()
@click.version_option(version=ENGINE_VERSION, prog_name="epidecide")
def main():
    """Decision support for epidemic countermeasure strategies."""


@main.command()
@click.argument("scenario_path")
@click.option("--seed", type=int, default=None, help="Ensemble seed (default: scenario's).")
@click.option("--runs", type=int, default=None, help="Override the run count.")
@click.option("--workers", type=int, default=1, help="Strategy-level worker processes.")
@click.option("--data-dir", default=None, help=f"Store root (or ${DATA_DIR_ENV}).")
def run(scenario_path, seed, runs, workers, data_dir):
    """Run the ensemble for SCENARIO_PATH ('default' for the bundled one)."""
    scenario = resolve_scenario(scenario_path)
    store = open_store(data_dir)
    config = scenario.run_config(seed=seed, n_runs=runs)
    click.echo(
        f"running {len(scenario.strategies())} strategies x {config.n_runs} runs "
        f"({config.horizon_weeks} weeks, seed {config.seed})"
    )
    try:
        result = run_ensemble(
            scenario.strategies(),
            config,
            scenario.build_inputs(),
            workers=workers,
            scenario_digest=scenario.digest(),
        )
        stored = store.save_run(scenario, result)
    except click.ClickException:
        raise
    except Exception as exc:
        raise click.ClickException(f"run failed: {exc}")
    click.echo(f"run id: {stored.run_id}")
    click.echo(f"stored in: {store.run_dir(stored.run_id)}")
    rows = [
        {
            "strategy": o.strategy.id,
            "expected_deaths": o.expected_total_deaths,
            "weeks_none": float(o.expected_weeks_in_regime[0]),
            "weeks_partial": float(o.expected_weeks_in_regime[1]),
            "weeks_complete": float(o.expected_weeks_in_regime[2]),
        }
        for o in result.outcomes
    ]
    click.echo(
        format_table(
            rows,
            ["strategy", "expected_deaths", "weeks_none", "weeks_partial", "weeks_complete"],
        )
    )


@main.command()
@click.argument("run_id")
@click.option("--weights", required=True, help=WEIGHTS_HELP)
@click.option(
    "--age-filter", type=click.Choice(["under45", "over45"]), default=None,
    help="Restrict attributes to one age side.",
)
@click.option("--machine", is_flag=True, help="Emit the exact export format.")
@click.option("--data-dir", default=None)
def score(run_id, weights, age_filter, machine, data_dir):
    """Rank a completed run's strategies under criterion weights."""
    store = open_store(data_dir)
    stored = load_run_or_fail(store, run_id)
    parsed = parse_weights(weights)
    rows = export_rows(stored, parsed, age_filter=age_filter)
    echo_rows(rows, machine)


@main.command()
@click.argument("run_id")
@click.option("--machine", is_flag=True)
@click.option("--data-dir", default=None)
def pareto(run_id, machine, data_dir):
    """Show the non-dominated front on (covid+cancer) vs poverty axes."""
    store = open_store(data_dir)
    stored = load_run_or_fail(store, run_id)
    ids, points = grouped_points(stored.attribute_vectors())
    mask = non_dominated_mask(points)
    if machine:
        click.echo("strategy,short_medium_term,poverty,on_front")
        for sid, point, flag in zip(ids, points, mask):
            click.echo(f"{sid},{point[0]!r},{point[1]!r},{int(flag)}")
        return
    rows = [
        {
            "strategy": sid,
            "covid+cancer": float(point[0]),
            "poverty": float(point[1]),
            "on_front": "yes" if flag else "",
        }
        for sid, point, flag in zip(ids, points, mask)
    ]
    click.echo(format_table(rows, ["strategy", "covid+cancer", "poverty", "on_front"]))


@main.command(name="critical-weight")
@click.argument("run_id")
@click.option(
    "--age-filter", type=click.Choice(["under45", "over45"]), default=None,
)
@click.option("--data-dir", default=None)
def critical_weight_command(run_id, age_filter, data_dir):
    """Find the weight c where lockdown and non-lockdown families swap."""
    store = open_store(data_dir)
    stored = load_run_or_fail(store, run_id)
    lockdown, non_lockdown = default_partition(stored.strategies)
    if not lockdown or not non_lockdown:
        raise click.UsageError("run has no lockdown/non-lockdown split to compare")
    result = critical_weight(lockdown, non_lockdown, stored.attribute_vectors(age_filter))
    label = f" [{age_filter}]" if age_filter else ""
    if result.degenerate_interval is not None:
        lo, hi = result.degenerate_interval
        click.echo(f"families tie across the whole interval [{lo}, {hi}]{label}")
        return
    if result.no_crossing:
        click.echo(f"no crossing in [0, 0.5]{label}: one family is preferred throughout")
        return
    click.echo(f"critical weight c*{label}: {result.c_star:.6f}")
    click.echo(
        "short/medium-term importance ratio c*/(1-2c*): "
        f"{result.importance_ratio:.6f}"
    )
    click.echo(
        f"crossing pair: {result.best_lockdown} (lockdown) vs "
        f"{result.best_non_lockdown} (non-lockdown)"
    )


@main.command()
@click.argument("run_id")
@click.option("--weights", default="equal", help=WEIGHTS_HELP)
@click.option("--format", "export_format", type=click.Choice(["table"]), default="table")
@click.option(
    "--age-filter", type=click.Choice(["under45", "over45"]), default=None,
)
@click.option("-o", "--out", default=None, help="Output file (default: run's exports dir).")
@click.option("--data-dir", default=None)
def export(run_id, weights, export_format, age_filter, out, data_dir):
    """Write the delimited per-strategy results table."""
    store = open_store(data_dir)
    stored = load_run_or_fail(store, run_id)
    parsed = parse_weights(weights)
    suffix = f"-{age_filter}" if age_filter else ""
    path = Path(out) if out else store.run_dir(run_id) / "exports" / f"results{suffix}.csv"
    written = write_export(stored, parsed, path, age_filter=age_filter)
    click.echo(f"wrote {written} ({len(stored.strategies)} strategies)")


@main.command()
@click.argument("run_id")
@click.option("--weights", default="equal", help=WEIGHTS_HELP)
@click.option("-o", "--out", default=None, help="Report directory.")
@click.option("--data-dir", default=None)
def report(run_id, weights, out, data_dir):
    """Render the CSV table and figures for a completed run."""
    from .report import render_report

    store = open_store(data_dir)
    stored = load_run_or_fail(store, run_id)
    parsed = parse_weights(weights)
    out_dir = Path(out) if out else store.run_dir(run_id) / "exports"
    artifacts = render_report(stored, parsed, out_dir)
    for name, path in artifacts.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("-o", "--out", default="scenario.yaml", help="Destination path.")
def init_scenario(out):
    """Write the bundled default scenario to OUT for editing."""
    path = Path(out)
    if path.exists():
        raise click.UsageError(f"{path} already exists; refusing to overwrite")
    path.write_text(default_scenario_text())
    click.echo(f"wrote {path}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000, help="0 picks an ephemeral port.")
@click.option("--data-dir", default=None)
@click.option("--static-dir", default=None, help="Built UI bundle to serve at /.")
def serve(host, port, data_dir, static_dir):
    """Start the HTTP service."""
    import uvicorn

    from .server import create_app

    root = data_dir or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR
    app = create_app(root, static_dir=static_dir)
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    sock = config.bind_socket()
    bound_host, bound_port = sock.getsockname()[:2]
    click.echo(f"serving on http://{bound_host}:{bound_port}")
    sys.stdout.flush()
    server.run(sockets=[sock])


if __name__ == "__main__":
    main()
