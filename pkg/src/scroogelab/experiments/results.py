"""Result tables and their CSV / JSON / SVG outputs."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIXED_COLUMNS = ("k", "metric", "value", "std_err", "instance", "seed")

# canonical order of parameter columns; unknown keys follow alphabetically
PARAM_ORDER = (
    "check",
    "model",
    "N",
    "N_A",
    "N_B",
    "theta",
    "chi",
    "depth",
    "N_T",
    "cnot_pattern",
    "region",
    "h",
    "beta",
    "basis",
    "shots",
)


def format_value(v) -> str:
    """Exact, locale-free text for a CSV cell (``repr`` round-trips floats)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ResultTable:
    """Rows of ``(experiment, params..., k, metric, value, std_err, instance, seed)``.

    ``instance`` is an integer for per-instance rows and ``"mean"`` for
    grid-point summaries.  ``metadata`` goes to the JSON sidecar only, so
    wall times there never affect CSV determinism.
    """

    experiment: str
    param_columns: tuple = ()
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple:
        return ("experiment",) + tuple(self.param_columns) + FIXED_COLUMNS

    def add(self, params: dict, k: int, metric: str, value: float, std_err=None, instance=0, seed=None) -> None:
        row = {"experiment": self.experiment}
        row.update({c: params.get(c) for c in self.param_columns})
        row.update({"k": k, "metric": metric, "value": value, "std_err": std_err, "instance": instance, "seed": seed})
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, **where) -> list[dict]:
        """Rows whose columns equal the given values (floats compared to 1e-12)."""
        out = []
        for r in self.rows:
            ok = True
            for key, want in where.items():
                have = r.get(key)
                if isinstance(want, float) and math.isfinite(want) and isinstance(have, (int, float)) and not isinstance(have, bool):
                    ok = abs(have - want) <= 1e-12 * max(1.0, abs(want))
                else:
                    ok = have == want
                if not ok:
                    break
            if ok:
                out.append(r)
        return out

    def per_instance(self) -> list[dict]:
        return [r for r in self.rows if r["instance"] != "mean"]

    def summary(self) -> list[dict]:
        return [r for r in self.rows if r["instance"] == "mean"]

    def summarize(self) -> "ResultTable":
        """Append mean and standard-error rows per (grid point, metric)."""
        groups: dict = {}
        for r in self.per_instance():
            key = tuple(format_value(r[c]) for c in self.param_columns) + (r["k"], r["metric"])
            groups.setdefault(key, []).append(r)
        for rows in groups.values():
            vals = np.array([r["value"] for r in rows], dtype=float)
            n = vals.size
            se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else (rows[0]["std_err"] if rows[0]["std_err"] is not None else 0.0)
            mean = dict(rows[0])
            mean.update({"value": float(vals.mean()), "std_err": se, "instance": "mean", "seed": None})
            self.rows.append(mean)
        return self

    def to_csv_text(self, rows: list[dict] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows if rows is None else rows:
            w.writerow([format_value(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def curve(self, x: str, metric: str = "delta_trace", **where) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Summary ``(x, mean, std_err)`` sorted in ``x``."""
        rows = [r for r in self.select(metric=metric, instance="mean", **where)]
        rows.sort(key=lambda r: r[x])
        xs = np.array([r[x] for r in rows], dtype=float)
        ys = np.array([r["value"] for r in rows], dtype=float)
        es = np.array([r["std_err"] or 0.0 for r in rows], dtype=float)
        return xs, ys, es


def read_csv(path) -> ResultTable:
    """Re-ingest a CSV written by :func:`emit_outputs`."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    n_fixed = len(FIXED_COLUMNS)
    if tuple(header[-n_fixed:]) != FIXED_COLUMNS or header[0] != "experiment":
        raise ValueError(f"{path}: not a result table (header {header})")
    table = ResultTable("", tuple(header[1:-n_fixed]))
    for cells in reader:
        row = {c: parse_cell(v) for c, v in zip(header, cells)}
        row["experiment"] = cells[0]
        table.rows.append(row)
    if table.rows:
        table.experiment = table.rows[0]["experiment"]
    return table


def _versions() -> dict:
    import scipy

    from .. import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "scroogelab": __version__}


def emit_outputs(table: ResultTable, out_dir, formats=("csv", "json"), stem: str | None = None, config=None) -> list[Path]:
    """Write the table as CSV (per-instance and summary), JSON sidecar and SVG plots.

    Returns the written paths.  An empty table still yields header-only
    CSVs, with a warning.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or table.experiment.replace(":", "_")
    written = []
    if not table.rows:
        warnings.warn(f"result table {stem!r} is empty; writing headers only", RuntimeWarning, stacklevel=2)
    if "csv" in formats:
        p = out / f"{stem}.csv"
        p.write_text(table.to_csv_text(table.per_instance()))
        written.append(p)
        p = out / f"{stem}_summary.csv"
        p.write_text(table.to_csv_text(table.summary()))
        written.append(p)
    if "json" in formats:
        meta = dict(table.metadata)
        meta["versions"] = _versions()
        meta["columns"] = list(table.columns)
        if config is not None:
            meta["config"] = config.echo()
            meta["config_hash"] = config.config_hash()
        p = out / f"{stem}.json"
        p.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
        written.append(p)
    if "svg" in formats:
        from .plotting import plot_table

        written.extend(plot_table(table, out, stem))
    return written
