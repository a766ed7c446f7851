"""SVG line and heat-map plots of summary rows."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MAX_LEGEND = 12
X_PREFERENCE = ("N_B", "N_T", "depth", "h", "theta", "N", "beta", "chi", "N_A")


def _varying(rows: list[dict], cols) -> list[str]:
    return [c for c in cols if len({repr(r.get(c)) for r in rows}) > 1]


def plot_lines(table, x: str, path, metric: str = "delta_trace", logy: bool = True, logx: bool = False) -> Path:
    """One line per combination of the other varying parameters."""
    rows = [r for r in table.summary() if r["metric"] == metric]
    others = [c for c in _varying(rows, table.param_columns) if c != x]
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r.get(c) for c in others), []).append(r)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for key, rs in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        rs.sort(key=lambda r: r[x])
        xs = np.array([r[x] for r in rs], dtype=float)
        ys = np.array([r["value"] for r in rs], dtype=float)
        es = np.array([r["std_err"] or 0.0 for r in rs], dtype=float)
        label = ", ".join(f"{c}={v:.3g}" if isinstance(v, float) else f"{c}={v}" for c, v in zip(others, key)) or metric
        ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, capsize=2, label=label)
    if logy and rows and all((r["value"] or 0) > 0 for r in rows):
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(f"{metric} (k={rows[0]['k']})" if rows else metric)
    # past a dozen lines a legend hides the data
    if 1 < len(groups) <= MAX_LEGEND:
        ax.legend(fontsize=6)
    path = Path(path)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_heatmap(table, x: str, y: str, path, metric: str = "delta_trace") -> Path:
    """One cell per ``(x, y)`` grid point."""
    rows = [r for r in table.summary() if r["metric"] == metric]
    xs = sorted({r[x] for r in rows})
    ys = sorted({r[y] for r in rows})
    grid = np.full((len(ys), len(xs)), np.nan)
    for r in rows:
        grid[ys.index(r[y]), xs.index(r[x])] = r["value"]
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(xs)), [f"{v:g}" for v in xs])
    ax.set_yticks(range(len(ys)), [f"{v:g}" for v in ys])
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    fig.colorbar(im, ax=ax, label=metric)
    path = Path(path)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_table(table, out_dir, stem: str) -> list[Path]:
    """Default figures: a heat map for 2D ``(depth, N_T)`` sweeps, else lines."""
    rows = [r for r in table.summary() if r["metric"] == "delta_trace"]
    if not rows:
        return []
    vary = _varying(rows, table.param_columns)
    out = Path(out_dir)
    paths = []
    if "depth" in vary and "N_T" in vary:
        paths.append(plot_heatmap(table, "N_T", "depth", out / f"{stem}_heatmap.svg"))
    xs = [c for c in X_PREFERENCE if c in vary] or [c for c in X_PREFERENCE if c in table.param_columns][:1]
    if xs:
        paths.append(plot_lines(table, xs[0], out / f"{stem}_{xs[0]}.svg"))
    return paths
