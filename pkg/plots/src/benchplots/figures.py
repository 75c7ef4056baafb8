"""Render benchmark sweep CSVs to static summary figures.

The benchmark harness writes one CSV row per sweep point.  This module reads
that file and produces one three-panel figure per sweep axis it finds:
fraction of stable trials, mean relative error, and relative-error variance,
each against the swept value.  The harness is consumed only through the CSV;
nothing here imports it.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams["svg.hashsalt"] = "benchplots"

EXPECTED_COLUMNS = [
    "sweep_axis",
    "sweep_value",
    "trials",
    "n_stable",
    "fraction_stable",
    "rel_err_mean",
    "rel_err_var",
    "wall_time_s",
    "seed",
]

AXIS_LABELS = {
    "rollout_M": "rollout length M",
    "inner_T": "inner iterations T",
    "exploration_var": "exploration variance",
    "disturbance_mag": "disturbance magnitude",
}

# rollout length and exploration variance are swept over decades
LOG_X_AXES = ("rollout_M", "exploration_var")

FORMATS = ("png", "svg")

PANELS = (
    ("fraction_stable", "fraction stable"),
    ("rel_err_mean", "relative error (mean)"),
    ("rel_err_var", "relative error (variance)"),
)


class SchemaError(ValueError):
    """The CSV does not match the benchmark schema.

    The message names the offending column.
    """


@dataclass(frozen=True)
class FigureSpec:
    """One render request: input CSV, output directory, image format."""

    input_csv: str
    out_dir: str
    fmt: str = "png"
    dpi: int = 150

    def __post_init__(self) -> None:
        if self.fmt not in FORMATS:
            raise ValueError("format must be one of %s, got %r" % (FORMATS, self.fmt))


def _check_header(header: list[str] | None) -> None:
    if header is None:
        raise SchemaError("missing column %r: file has no header row" % EXPECTED_COLUMNS[0])
    for name in EXPECTED_COLUMNS:
        if name not in header:
            raise SchemaError("missing column %r" % name)
    for name in header:
        if name not in EXPECTED_COLUMNS:
            raise SchemaError("unexpected column %r" % name)
    if header != EXPECTED_COLUMNS:
        for got, want in zip(header, EXPECTED_COLUMNS):
            if got != want:
                raise SchemaError("column %r out of order, expected %r" % (got, want))


def _cell(row: dict[str, str], column: str, line: int, required: bool) -> float:
    raw = row[column]
    if raw is None:
        raise SchemaError("column %r missing on line %d" % (column, line))
    if raw == "":
        if required:
            raise SchemaError("column %r empty on line %d" % (column, line))
        return math.nan
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(
            "column %r has non-numeric value %r on line %d" % (column, raw, line)
        ) from None


def read_sweeps(path: str) -> dict[str, list[dict[str, float]]]:
    """Parse a benchmark CSV into {sweep_axis: ordered rows}.

    Empty rel_err cells (sweeps where no trial was stable) become NaN so the
    plotted series show gaps.  Any header or cell that breaks the schema
    raises SchemaError naming the column.
    """
    groups: dict[str, list[dict[str, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        _check_header(reader.fieldnames)
        for line, row in enumerate(reader, start=2):
            axis = row["sweep_axis"]
            if not axis:
                raise SchemaError("column 'sweep_axis' empty on line %d" % line)
            parsed = {
                "sweep_value": _cell(row, "sweep_value", line, required=True),
                "fraction_stable": _cell(row, "fraction_stable", line, required=True),
                "rel_err_mean": _cell(row, "rel_err_mean", line, required=False),
                "rel_err_var": _cell(row, "rel_err_var", line, required=False),
            }
            groups.setdefault(axis, []).append(parsed)
    return groups


def build_figure(axis: str, rows: list[dict[str, float]]):
    """Three-panel summary figure for one sweep axis."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    x = [r["sweep_value"] for r in rows]
    xlabel = AXIS_LABELS.get(axis, axis)
    for ax, (key, label) in zip(axes, PANELS):
        y = [r[key] for r in rows]
        ax.plot(x, y, marker="o", markersize=4)
        if axis in LOG_X_AXES:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def _save(fig, path: str, spec: FigureSpec) -> None:
    if spec.fmt == "png":
        # drop the library version stamp so re-renders are byte-identical
        fig.savefig(path, dpi=spec.dpi, metadata={"Software": None})
    else:
        fig.savefig(path, dpi=spec.dpi, metadata={"Date": None})


def render(spec: FigureSpec) -> list[str]:
    """Write one figure per sweep axis found in the CSV, return the paths."""
    groups = read_sweeps(spec.input_csv)
    os.makedirs(spec.out_dir, exist_ok=True)
    paths = []
    for axis, rows in groups.items():
        fig = build_figure(axis, rows)
        path = os.path.join(spec.out_dir, "%s.%s" % (axis, spec.fmt))
        try:
            _save(fig, path, spec)
        finally:
            plt.close(fig)
        paths.append(path)
    return paths
