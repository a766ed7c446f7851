"""Command-line entry point ``scroogelab``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .. import analysis
from ..exceptions import ConfigError, InputError, NumericalError
from .config import build_config, load_config, parse_value
from .plotting import plot_heatmap, plot_lines
from .results import emit_outputs, read_csv
from .runners import run_experiment

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _formats(text: str) -> tuple:
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fmts if f not in ("csv", "json", "svg")]
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    return fmts


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def _run(kind: str, config, seed, out, threads, fmt, sets) -> None:
    try:
        overrides = _overrides(sets)
        if seed is not None:
            overrides["base_seed"] = seed
        if out is not None:
            overrides["out"] = out
        cfg = load_config(config, kind, overrides) if config else build_config({}, kind, overrides)
        formats = _formats(fmt)
        table = run_experiment(cfg, threads=threads)
        paths = emit_outputs(table, cfg.out, formats, config=cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    for p in paths:
        click.echo(str(p))
    if table.metadata.get("errors"):
        click.echo(f"{len(table.metadata['errors'])} grid point(s) skipped; see the JSON sidecar", err=True)


def _experiment_command(name: str, kind: str, help_text: str):
    @click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="Config file (key = value lines).")
    @click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Base seed (overrides the config).")
    @click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
    @click.option("--threads", type=click.IntRange(1), default=1, show_default=True)
    @click.option("--format", "fmt", default="csv,json", show_default=True, help="Comma list of csv, json, svg.")
    @click.option("--set", "sets", multiple=True, help="Override a config entry, e.g. --set 'N_B=[4, 6]'.")
    def cmd(config, seed, out, threads, fmt, sets):
        _run(kind, config, seed, out, threads, fmt, sets)

    cmd.__doc__ = help_text
    return main.command(name)(cmd)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Projected-ensemble and Scrooge-design numerics."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


_experiment_command("commuting", "commuting", "Bell ladder with random diagonal phases and R_y(theta) rotation on B.")
_experiment_command("doped-clifford", "doped_clifford", "Entangled pairs scrambled by T-doped Clifford circuits.")
_experiment_command("ground-state", "ground_state", "Ground states of spin chains measured in rotated bases.")
_experiment_command("theorem-check", "theorem_check", "Measured distances next to theorem scaling values.")


def _where(table, items, metric):
    where = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--where expects col=value, got {item!r}")
        k, v = item.split("=", 1)
        val = parse_value(v)
        where[k.strip()] = float(val) if isinstance(val, int) and not isinstance(val, bool) else val
    return where


def _load_table(path):
    try:
        return read_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read result table {path}: {exc}") from exc


def _summary_rows(table, metric, where):
    rows = table.select(metric=metric, instance="mean", **where)
    if not rows:
        rows_inst = table.select(metric=metric, **where)
        if rows_inst:
            table.summarize()
            rows = table.select(metric=metric, instance="mean", **where)
    return rows


@main.command("fit")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Choice(["exp2", "power", "shifted"]), default="exp2", show_default=True)
@click.option("--x", "x", default="N_B", show_default=True, help="Abscissa column.")
@click.option("--metric", default="delta_trace", show_default=True)
@click.option("--where", "where", multiple=True, help="Filter col=value (repeatable).")
@click.option("--range", "xrange", default=None, help="lo,hi window on x.")
@click.option("--gamma", type=float, default=None, help="Fix gamma for the shifted model.")
def fit_cmd(input_path, model, x, metric, where, xrange, gamma):
    """Fit a decay law to summary rows of a result CSV; prints JSON."""
    try:
        table = _load_table(input_path)
        rows = _summary_rows(table, metric, _where(table, where, metric))
        if not rows:
            raise ConfigError("no rows match the filters")
        xs = np.array([r[x] for r in rows], dtype=float)
        ys = np.array([r["value"] for r in rows], dtype=float)
        rng = tuple(float(v) for v in xrange.split(",")) if xrange else None
        if model == "exp2":
            res = analysis.fit_exp_decay(xs, ys, rng)
        elif model == "power":
            res = analysis.fit_power_law(xs, ys, rng)
        else:
            if rng:
                m = (xs >= rng[0]) & (xs <= rng[1])
                xs, ys = xs[m], ys[m]
            res = analysis.fit_shifted_power(xs, ys, gamma)
    except (ConfigError, InputError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(json.dumps({"model": res.model, "params": res.params, "errors": res.errors, "residual": res.residual, "x_range": res.x_range, "n_points": res.n_points, "converged": res.converged}, indent=2))


@main.command("collapse")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--x", "x", default="h", show_default=True, help="Control-parameter column.")
@click.option("--size", "size", default="N_B", show_default=True, help="System-size column.")
@click.option("--metric", default="delta_trace", show_default=True)
@click.option("--where", "where", multiple=True, help="Filter col=value (repeatable).")
@click.option("--nu", "nus", default="1,2", show_default=True, help="Comma list of trial exponents.")
@click.option("--transform", type=click.Choice(["none", "log2_per_size"]), default="none", show_default=True)
@click.option("--shift", type=click.Choice(["none", "minimum"]), default="none", show_default=True, help="Subtract per-curve dip location and depth.")
@click.option("--window", default="0.7,1.3", show_default=True, help="lo,hi window for the dip search and the collapse.")
@click.option("--h0", type=float, default=0.0, show_default=True, help="Shared shift when --shift none.")
def collapse_cmd(input_path, x, size, metric, where, nus, transform, shift, window, h0):
    """Finite-size scaling collapse quality for trial exponents; prints JSON."""
    try:
        table = _load_table(input_path)
        rows = _summary_rows(table, metric, _where(table, where, metric))
        if not rows:
            raise ConfigError("no rows match the filters")
        lo, hi = (float(v) for v in window.split(","))
        curves = analysis.curves_from_rows(rows, x, size, transform)
        out = analysis.collapse_report(curves, [float(v) for v in nus.split(",")], shift, (lo, hi), h0)
    except (ConfigError, InputError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(json.dumps(out, indent=2))


@main.command("plot")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--x", "x", default="N_B", show_default=True)
@click.option("--y", "y", default=None, help="Second axis for a heat map.")
@click.option("--metric", default="delta_trace", show_default=True)
@click.option("--out", "out", required=True, type=click.Path(dir_okay=False))
@click.option("--linear", is_flag=True, help="Linear y axis.")
def plot_cmd(input_path, x, y, metric, out, linear):
    """Render summary rows of a result CSV as an SVG line or heat map."""
    try:
        table = _load_table(input_path)
        if not table.summary():
            table.summarize()
        if y:
            path = plot_heatmap(table, x, y, out, metric)
        else:
            path = plot_lines(table, x, out, metric, logy=not linear)
    except (ConfigError, KeyError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(str(Path(path)))


if __name__ == "__main__":
    main()
