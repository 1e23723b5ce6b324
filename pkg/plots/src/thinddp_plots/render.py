"""Figure rendering from harness CSV outputs.

Four figure kinds are supported, each consuming one documented CSV schema:

* ``boxplot``  - metrics.csv (one box per model, optionally grouped by scenario)
* ``curves``   - prior Monte Carlo CSV (expected cluster count vs sample size,
                 one curve per thinning parameter, dotted pooling bounds)
* ``density``  - densities.csv (per-group estimate, credible band, and truth)
* ``heatmap``  - labeled dense matrix CSV (pairwise distances or similarities)

This package never recomputes statistics; everything drawn comes out of the
input files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["SchemaError", "PlotSpec", "KINDS", "build_figure", "render"]

KINDS = ("boxplot", "curves", "density", "heatmap")


class SchemaError(ValueError):
    """The input file does not match the expected harness schema."""


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: input CSVs, figure kind, output path, and labels."""

    inputs: tuple[str, ...]
    kind: str
    output: str
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("need at least one input CSV")
        for path in self.inputs:
            if not Path(path).exists():
                raise SchemaError(f"input does not exist: {path}")


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def _require(header: list[str], columns: list[str], path) -> dict[str, int]:
    index = {name: i for i, name in enumerate(header)}
    for col in columns:
        if col not in index:
            raise SchemaError(f"{path}: missing required column {col!r}")
    return index


def _floats(rows, idx):
    return [float(r[idx]) for r in rows]


def _fig_boxplot(spec: PlotSpec):
    path = spec.inputs[0]
    value_col = spec.labels.get("value", "avg_ari")
    header, rows = _read_csv(path)
    idx = _require(header, ["scenario", "model", "replication", value_col], path)

    groups: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        key = (row[idx["scenario"]], row[idx["model"]])
        groups.setdefault(key, []).append(float(row[idx[value_col]]))

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(groups)), 4.0))
    if groups:
        keys = sorted(groups)
        ax.boxplot([groups[k] for k in keys], tick_labels=[f"{s}\n{m}" for s, m in keys])
    ax.set_ylabel(spec.labels.get("y", value_col))
    ax.set_title(spec.labels.get("title", f"{value_col} by scenario and model"))
    fig.tight_layout()
    return fig


def _fig_count_curves(spec: PlotSpec, header, rows, path):
    """Shared/specific expected counts against the thinning parameter."""
    idx = _require(header, ["param", "n1", "ek0", "ek1", "ek2"], path)
    sizes = {row[idx["n1"]] for row in rows}
    if len(sizes) > 1:
        raise SchemaError(f"{path}: parameter-axis curves need a single sample size, got {sorted(sizes)}")
    rows = sorted(rows, key=lambda r: float(r[idx["param"]]))
    params = _floats(rows, idx["param"])
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.plot(params, _floats(rows, idx["ek0"]), marker="o", label="shared")
    ax.plot(params, _floats(rows, idx["ek1"]), marker="o", linestyle="--", label="specific, sample 1")
    ax.plot(params, _floats(rows, idx["ek2"]), marker="o", linestyle="--", label="specific, sample 2")
    ax.set_xlabel(spec.labels.get("x", "thinning parameter"))
    ax.set_ylabel(spec.labels.get("y", "expected number of clusters"))
    ax.set_title(spec.labels.get("title", "shared and sample-specific clusters"))
    ax.legend()
    fig.tight_layout()
    return fig


def _fig_curves(spec: PlotSpec):
    path = spec.inputs[0]
    header, rows = _read_csv(path)
    if spec.labels.get("x_axis") == "param":
        return _fig_count_curves(spec, header, rows, path)
    idx = _require(header, ["param", "n1", "ek", "lower", "upper"], path)

    by_param: dict[float, list[tuple[float, float]]] = {}
    bounds: dict[float, tuple[float, float]] = {}
    for row in rows:
        param = float(row[idx["param"]])
        n = float(row[idx["n1"]])
        by_param.setdefault(param, []).append((n, float(row[idx["ek"]])))
        bounds[n] = (float(row[idx["lower"]]), float(row[idx["upper"]]))

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for param in sorted(by_param):
        pts = sorted(by_param[param])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{param:g}")
    if bounds:
        ns = sorted(bounds)
        ax.plot(ns, [bounds[n][0] for n in ns], linestyle=":", color="black")
        ax.plot(ns, [bounds[n][1] for n in ns], linestyle=":", color="black")
    ax.set_xlabel(spec.labels.get("x", "sample size per group"))
    ax.set_ylabel(spec.labels.get("y", "expected number of clusters"))
    ax.set_title(spec.labels.get("title", "expected clusters with pooling bounds"))
    if by_param:
        ax.legend(title=spec.labels.get("legend", "thinning parameter"))
    fig.tight_layout()
    return fig


def _fig_density(spec: PlotSpec):
    path = spec.inputs[0]
    header, rows = _read_csv(path)
    idx = _require(header, ["model", "group", "x", "estimate", "lower", "upper", "truth"], path)

    groups = sorted({row[idx["group"]] for row in rows})
    models = sorted({row[idx["model"]] for row in rows})
    ncols = min(len(groups), 5) or 1
    nrows = (len(groups) + ncols - 1) // ncols if groups else 1
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 3.0 * nrows), squeeze=False)

    for ax in axes.ravel()[len(groups):]:
        ax.set_visible(False)
    for g, group in enumerate(groups):
        ax = axes.ravel()[g]
        sub = [row for row in rows if row[idx["group"]] == group]
        for m, model in enumerate(models):
            part = [row for row in sub if row[idx["model"]] == model]
            part.sort(key=lambda r: float(r[idx["x"]]))
            xs = _floats(part, idx["x"])
            ax.fill_between(
                xs, _floats(part, idx["lower"]), _floats(part, idx["upper"]),
                alpha=0.25, color=f"C{m}",
            )
            ax.plot(xs, _floats(part, idx["estimate"]), color=f"C{m}", label=model)
        if sub:
            truth = sorted(sub, key=lambda r: float(r[idx["x"]]))
            ax.plot(_floats(truth, idx["x"]), _floats(truth, idx["truth"]),
                    color="black", linestyle="--", linewidth=1.0, label="truth")
        ax.set_title(f"group {group}")
    if groups:
        axes.ravel()[0].legend(fontsize="small")
    fig.suptitle(spec.labels.get("title", "posterior densities with credible bands"))
    fig.tight_layout()
    return fig


def _fig_heatmap(spec: PlotSpec):
    path = spec.inputs[0]
    header, rows = _read_csv(path)
    if not header or header[0] != "label":
        raise SchemaError(f"{path}: missing required column 'label'")
    col_labels = header[1:]
    row_labels = [row[0] for row in rows]
    if len(row_labels) != len(col_labels):
        raise SchemaError(f"{path}: matrix is not square ({len(row_labels)}x{len(col_labels)})")
    try:
        values = [[float(v) for v in row[1:]] for row in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric matrix entry: {exc}") from exc

    size = max(4.0, 0.45 * len(row_labels) + 1.5)
    fig, ax = plt.subplots(figsize=(size, size * 0.9))
    image = ax.imshow(values, cmap=spec.labels.get("cmap", "viridis"))
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=90)
    ax.set_yticks(range(len(row_labels)), row_labels)
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title(spec.labels.get("title", "pairwise matrix"))
    fig.tight_layout()
    return fig


_BUILDERS = {
    "boxplot": _fig_boxplot,
    "curves": _fig_curves,
    "density": _fig_density,
    "heatmap": _fig_heatmap,
}


def build_figure(spec: PlotSpec):
    """Build the matplotlib figure for a spec without saving it."""
    return _BUILDERS[spec.kind](spec)


def render(spec: PlotSpec) -> str:
    """Render the figure to ``spec.output`` and return the path."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150, metadata={"Software": None} if out.suffix == ".png" else None)
    plt.close(fig)
    return str(out)
