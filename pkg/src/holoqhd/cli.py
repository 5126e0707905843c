"""Command-line entry point: ``holoqhd run|diag|convert|list-scenarios``."""
import os
import sys

import click

from holoqhd import fields, scenarios, snapshot
from holoqhd.config import KIND_HELP, KINDS, parse_config
from holoqhd.errors import ConfigError, SnapshotFormatError


def _load(config_path, overrides, seed, output_dir=None):
    try:
        with open(config_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        click.echo(f"error: cannot read {config_path}: {exc}", err=True)
        sys.exit(scenarios.EXIT_IO)
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"scenario.seed={seed}")
    try:
        s = parse_config(text, overrides)
    except ConfigError as exc:
        for path, msg in exc.errors:
            click.echo(f"config error: {path}: {msg}", err=True)
        sys.exit(scenarios.EXIT_CONFIG)
    s.output_dir = output_dir
    return s


@click.group()
@click.option("--threads", type=int, default=1, show_default=True, help="FFT worker threads.")
def main(threads):
    """Quantum hydrodynamics with an internal gauge potential."""
    fields.set_threads(threads)


_override = click.option("--override", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
                         help="Replace a config value (repeatable).")
_seed = click.option("--seed", type=int, default=None, help="Seed for initial-state noise.")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--output-dir", type=click.Path(file_okay=False), default=None,
              help="Where artifacts go (default runs/<name>).")
@_seed
@_override
def run(config, output_dir, seed, overrides):
    """Run the scenario described by CONFIG."""
    s = _load(config, overrides, seed, output_dir)
    res = scenarios.run_scenario(s)
    if res.exit_code:
        click.echo(f"{res.status}: {res.message}", err=True)
    else:
        click.echo(f"wrote {len(res.files)} files to {res.output_dir}")
    sys.exit(res.exit_code)


@main.command()
@click.argument("snapshot_path", type=click.Path(dir_okay=False))
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--time", "time_", type=float, default=None, help="Time of the snapshot (default from manifest).")
@click.option("--filament", type=click.Path(dir_okay=False), default=None,
              help="Filament node CSV (default from manifest).")
@_seed
@_override
def diag(snapshot_path, config, time_, filament, seed, overrides):
    """Print the diagnostics row of a stored SNAPSHOT under the physics of CONFIG."""
    s = _load(config, overrides, seed)
    entry = scenarios.manifest_entry_for(snapshot_path) or {}
    t = entry.get("time", 0.0) if time_ is None else time_
    fil = entry.get("filament") if filament is None else filament
    try:
        header, row = scenarios.diagnose_snapshot(s, snapshot_path, t, fil, entry.get("step", 0))
    except SnapshotFormatError as exc:
        click.echo(f"format error: {exc}", err=True)
        sys.exit(scenarios.EXIT_IO)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(scenarios.EXIT_IO)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(scenarios.EXIT_CONFIG)
    click.echo(snapshot.csv_text(header, [row]), nl=False)


@main.command()
@click.argument("snapshot_path", type=click.Path(dir_okay=False))
@click.option("--to", "fmt", type=click.Choice(["csv"]), default="csv", show_default=True)
@click.option("--axis", type=int, default=0, show_default=True, help="Grid axis of the slice.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
              help="Output file (default: snapshot path with .csv).")
def convert(snapshot_path, fmt, axis, output):
    """Write an axis slice through the box centre of SNAPSHOT as CSV."""
    try:
        snap = snapshot.read_snapshot(snapshot_path)
        header, rows = snapshot.slice_rows(snap, axis)
        out = output or os.path.splitext(snapshot_path)[0] + ".csv"
        snapshot.write_csv(out, header, rows)
    except SnapshotFormatError as exc:
        click.echo(f"format error: {exc}", err=True)
        sys.exit(scenarios.EXIT_IO)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(scenarios.EXIT_IO)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(scenarios.EXIT_CONFIG)
    click.echo(out)


@main.command("list-scenarios")
def list_scenarios():
    """List the scenario kinds."""
    for kind in KINDS:
        click.echo(f"{kind:22s} {KIND_HELP[kind]}")


if __name__ == "__main__":
    main()
