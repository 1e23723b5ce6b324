"""Experiment orchestration: scenario runs, CSV fitting, and artifact emission.

All numeric CSV output uses a fixed float format and explicit newlines, so a
given configuration and seed reproduces byte-identical metric files. Wall-
clock timings go to their own file (``timings.csv``) to keep the metric files
deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SCHEMA_VERSION, ReplicationData, ScenarioConfig, generate_dataset, model_stream
from .mcmc import GroupedDataset, ModelConfig, PosteriorSamples, run_chain
from .thinning import (
    BernoulliThinning,
    DependentBernoulliThinning,
    EventuallySingleAtomThinning,
    SymmetricBlockedThinning,
    ThinningModel,
)
from .summaries import (
    ari,
    density_estimate,
    group_similarity,
    psm,
    tv_distance,
    vi_partition,
)

__all__ = [
    "DataError",
    "MetricRow",
    "load_scenario",
    "default_grid",
    "run_experiment",
    "read_grouped_csv",
    "fit_csv",
    "write_matrix_csv",
    "save_draws",
    "thinning_model_from_dict",
    "thinning_model_to_dict",
]


class DataError(Exception):
    """Malformed input data or configuration file."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_matrix_csv(path: Path, matrix: np.ndarray, labels) -> None:
    """Dense matrix with row/column labels in the first column/row."""
    labels = [str(lab) for lab in labels]
    rows = [[lab] + [m for m in row] for lab, row in zip(labels, np.asarray(matrix))]
    _write_rows(path, ["label"] + labels, rows)


_THINNING_KINDS = {
    "bernoulli": (BernoulliThinning, ("keep_probs",)),
    "eventually_single_atom": (EventuallySingleAtomThinning, ("starts", "rates")),
    "dependent_bernoulli": (DependentBernoulliThinning, ("p11", "p10", "p01", "p00")),
    "symmetric_blocked": (SymmetricBlockedThinning, ("blocks", "rates")),
}


def thinning_model_from_dict(record: dict) -> ThinningModel:
    """Build a thinning model from its tagged-record form, e.g.
    ``{"kind": "bernoulli", "keep_probs": [0.5, 0.5]}``."""
    if not isinstance(record, dict):
        raise DataError("thinning model record must be a JSON object")
    record = dict(record)
    kind = record.pop("kind", None)
    if kind not in _THINNING_KINDS:
        raise DataError(
            f"unknown thinning model kind {kind!r}; expected one of {sorted(_THINNING_KINDS)}"
        )
    cls, fields = _THINNING_KINDS[kind]
    unknown = set(record) - set(fields)
    if unknown:
        raise DataError(f"unknown keys for {kind}: {sorted(unknown)}")
    for key in ("keep_probs", "starts", "rates", "blocks"):
        if key in record and record[key] is not None:
            record[key] = tuple(record[key])
    try:
        return cls(**record)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid {kind} model: {exc}") from exc


def thinning_model_to_dict(model: ThinningModel) -> dict:
    """Tagged-record form of a thinning model, inverse of the parser."""
    for kind, (cls, fields) in _THINNING_KINDS.items():
        if type(model) is cls:
            record = {"kind": kind}
            for name in fields:
                value = getattr(model, name)
                if value is not None:
                    record[name] = list(value) if isinstance(value, tuple) else value
            return record
    raise TypeError(f"unknown thinning model {type(model).__name__}")


def load_scenario(path) -> ScenarioConfig:
    """Parse a scenario configuration file (JSON, schema_version 1)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("config must be a JSON object")
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    known = {
        "name", "sizes", "replications", "seed", "models", "generators",
        "iterations", "burn_in", "truncation", "grid_points", "density_replications",
    }
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    for key in ("name", "sizes", "replications", "seed"):
        if key not in raw:
            raise DataError(f"config missing required key {key!r}")
    for seq_key in ("sizes", "models", "generators", "density_replications"):
        if seq_key in raw and raw[seq_key] is not None:
            raw[seq_key] = tuple(raw[seq_key])
    try:
        return ScenarioConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid scenario config: {exc}") from exc


def default_grid(values: np.ndarray, n_points: int) -> np.ndarray:
    """Equally spaced grid spanning the data range widened by three sd."""
    values = np.asarray(values, dtype=float)
    pad = 3.0 * values.std()
    return np.linspace(values.min() - pad, values.max() + pad, n_points)


@dataclass(frozen=True)
class MetricRow:
    """Per-(scenario, model, replication) evaluation metrics."""

    scenario: str
    model: str
    replication: int
    avg_ari: float
    tv_by_group: tuple[float, ...]
    avg_tv: float
    avg_hpd_length: float
    wall_clock_s: float

    def __post_init__(self):
        if not -1.0 <= self.avg_ari <= 1.0:
            raise ValueError("average ARI outside [-1, 1]")
        if any(not 0.0 <= tv <= 1.0 for tv in self.tv_by_group):
            raise ValueError("TV distance outside [0, 1]")


@dataclass
class _FitOutput:
    row: MetricRow
    density_records: list | None


def _model_config(scenario: ScenarioConfig, mode: str) -> ModelConfig:
    return ModelConfig(mode=mode, truncation=scenario.truncation)


def _fit_one(scenario: ScenarioConfig, replication: int, mode: str,
             rep_data: ReplicationData, grid: np.ndarray) -> _FitOutput:
    model_index = scenario.models.index(mode)
    rng = model_stream(scenario.seed, replication, model_index)
    start = time.perf_counter()
    samples = run_chain(
        rep_data.dataset,
        _model_config(scenario, mode),
        scenario.iterations,
        scenario.burn_in,
        seed=rng,
    )
    grid_density = density_estimate(samples, grid)
    dx = grid_density.spacing

    aris = []
    for g, mat in enumerate(psm(samples, "per-group")):
        estimate = vi_partition(mat, seed=replication)
        aris.append(ari(estimate.labels, rep_data.true_labels[g]))
    tvs = tuple(
        tv_distance(grid_density.estimate[g], rep_data.true_pdf(g, grid), dx)
        for g in range(rep_data.dataset.n_groups)
    )
    elapsed = time.perf_counter() - start
    row = MetricRow(
        scenario=scenario.name,
        model=mode,
        replication=replication,
        avg_ari=float(np.mean(aris)),
        tv_by_group=tvs,
        avg_tv=float(np.mean(tvs)),
        avg_hpd_length=float(grid_density.band_lengths().mean()),
        wall_clock_s=elapsed,
    )
    records = None
    if replication in scenario.density_replications:
        records = []
        for g in range(rep_data.dataset.n_groups):
            truth = rep_data.true_pdf(g, grid)
            for i, x in enumerate(grid):
                records.append((
                    scenario.name, mode, replication, g, x,
                    grid_density.estimate[g, i], grid_density.lower[g, i],
                    grid_density.upper[g, i], truth[i],
                ))
    return _FitOutput(row, records)


def _run_replication(scenario: ScenarioConfig, replication: int) -> list[_FitOutput]:
    rep_data = generate_dataset(scenario, replication)
    grid = default_grid(rep_data.dataset.concatenated(), scenario.grid_points)
    return [_fit_one(scenario, replication, mode, rep_data, grid) for mode in scenario.models]


def _config_digest(scenario: ScenarioConfig) -> str:
    canonical = json.dumps(asdict(scenario), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_experiment(scenario: ScenarioConfig, outdir, *, workers: int = 1, verbose: bool = False):
    """Run every (replication, model) fit and write the metric artifacts.

    Files written to ``outdir``: metrics.csv, tv_by_group.csv, timings.csv,
    densities.csv (selected replications) and manifest.json. Replication
    failures are recorded in the manifest and do not stop the run; the
    returned tuple is (metric rows, failures).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    outputs: dict[int, list[_FitOutput]] = {}
    failures: list[dict] = []
    reps = range(scenario.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {rep: pool.submit(_run_replication, scenario, rep) for rep in reps}
            for rep, fut in futures.items():
                try:
                    outputs[rep] = fut.result()
                except Exception as exc:  # noqa: BLE001 - recorded and reported
                    failures.append({"replication": rep, "error": str(exc)})
    else:
        for rep in reps:
            try:
                outputs[rep] = _run_replication(scenario, rep)
            except Exception as exc:  # noqa: BLE001 - recorded and reported
                failures.append({"replication": rep, "error": str(exc)})
            if verbose:
                print(f"replication {rep + 1}/{scenario.replications} done", flush=True)

    rows = [out.row for rep in sorted(outputs) for out in outputs[rep]]
    _write_rows(
        outdir / "metrics.csv",
        ["scenario", "model", "replication", "avg_ari", "avg_tv", "avg_hpd_length"],
        [(r.scenario, r.model, r.replication, r.avg_ari, r.avg_tv, r.avg_hpd_length) for r in rows],
    )
    _write_rows(
        outdir / "tv_by_group.csv",
        ["scenario", "model", "replication", "group", "tv"],
        [
            (r.scenario, r.model, r.replication, g, tv)
            for r in rows
            for g, tv in enumerate(r.tv_by_group)
        ],
    )
    _write_rows(
        outdir / "timings.csv",
        ["scenario", "model", "replication", "wall_clock_s"],
        [(r.scenario, r.model, r.replication, r.wall_clock_s) for r in rows],
    )
    density_rows = [
        rec
        for rep in sorted(outputs)
        for out in outputs[rep]
        if out.density_records
        for rec in out.density_records
    ]
    _write_rows(
        outdir / "densities.csv",
        ["scenario", "model", "replication", "group", "x", "estimate", "lower", "upper", "truth"],
        density_rows,
    )

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulate",
        "config": asdict(scenario),
        "config_sha256": _config_digest(scenario),
        "seed": scenario.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "failures": failures,
        "wall_clock_s": time.perf_counter() - started,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return rows, failures


def read_grouped_csv(path) -> tuple[GroupedDataset, list[str]]:
    """Read ``group,y`` rows; group labels map to 0..G-1 in first appearance order.

    Malformed rows are reported with their line number; an input without any
    data rows is rejected.
    """
    labels: list[str] = []
    values: dict[str, list[float]] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["group", "y"]:
            raise DataError(f"{path}: expected header 'group,y', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            group = row[0].strip()
            if not group:
                raise DataError(f"{path}:{lineno}: empty group label")
            try:
                y = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: not a number: {row[1]!r}") from exc
            if not np.isfinite(y):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if group not in values:
                labels.append(group)
                values[group] = []
            values[group].append(y)
    if not labels:
        raise DataError(f"{path}: no data rows")
    groups = tuple(np.asarray(values[lab]) for lab in labels)
    return GroupedDataset(groups), labels


def save_draws(samples: PosteriorSamples, outdir, *, wall_clock_s: float | None = None) -> None:
    """Columnar CSV dump of the retained draws, one file per parameter block,
    plus a run manifest recording seed, configuration and timing."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    Q, T, G = samples.weights.shape
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "draws",
        "mode": samples.mode,
        "seed": samples.seed,
        "iterations": samples.iterations,
        "burn_in": samples.burn_in,
        "n_draws": Q,
        "config": asdict(samples.config),
        "package_version": __version__,
        "wall_clock_s": wall_clock_s,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    _write_rows(
        outdir / "allocations.csv",
        ["draw", "group", "index", "component"],
        (
            (q, g, i, int(z[q, i]))
            for g, z in enumerate(samples.alloc)
            for q in range(Q)
            for i in range(z.shape[1])
        ),
    )

    def block(name, array, value_names):
        rows = []
        for q in range(Q):
            for g in range(G):
                for t in range(T):
                    vals = array[q, t, g] if array.ndim == 3 else array[q, t, g, :]
                    rows.append((q, g, t) + tuple(np.atleast_1d(vals)))
        _write_rows(outdir / name, ["draw", "group", "component"] + value_names, rows)

    block("weights.csv", samples.weights, ["weight"])
    atoms = np.stack([samples.atom_means, samples.atom_vars], axis=-1)
    block("atoms.csv", atoms, ["mean", "variance"])
    block("thinning.csv", samples.flags, ["flag"])
    _write_rows(
        outdir / "keep_probs.csv",
        ["draw", "group", "keep_prob"],
        ((q, g, samples.keep_probs[q, g]) for q in range(Q) for g in range(G)),
    )


def fit_csv(
    input_path,
    outdir,
    *,
    config: ModelConfig | None = None,
    iterations: int = 10_000,
    burn_in: int = 5_000,
    seed: int = 0,
    grid_points: int = 300,
    level: float = 0.95,
    with_draws: bool = False,
) -> PosteriorSamples:
    """Fit one model to a grouped CSV and write all posterior summaries.

    Artifacts: density.csv, per-group and (shared-atom modes) global PSMs,
    partition.csv, group_similarity.csv + group_partition.csv, pairwise_tv.csv
    and manifest.json; optionally the raw draws under draws/.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = config or ModelConfig()
    data, labels = read_grouped_csv(input_path)
    started = time.perf_counter()
    samples = run_chain(data, config, iterations, burn_in, seed=seed)
    G = data.n_groups

    grid = default_grid(data.concatenated(), grid_points)
    grid_density = density_estimate(samples, grid, level)
    _write_rows(
        outdir / "density.csv",
        ["group", "x", "estimate", "lower", "upper"],
        (
            (labels[g], x, grid_density.estimate[g, i], grid_density.lower[g, i], grid_density.upper[g, i])
            for g in range(G)
            for i, x in enumerate(grid)
        ),
    )

    group_mats = psm(samples, "per-group")
    partition_rows = []
    for g, mat in enumerate(group_mats):
        write_matrix_csv(outdir / f"psm_group_{g}.csv", mat, range(mat.shape[0]))
        est = vi_partition(mat, seed=seed)
        partition_rows.extend(
            (labels[g], i, int(lab)) for i, lab in enumerate(est.labels)
        )
    _write_rows(outdir / "partition_by_group.csv", ["group", "index", "cluster"], partition_rows)

    if samples.mode != "no_pooling":
        global_mat = psm(samples, "global")
        write_matrix_csv(outdir / "psm_global.csv", global_mat, range(global_mat.shape[0]))
        est = vi_partition(global_mat, seed=seed)
        offsets = np.cumsum((0,) + data.sizes)
        _write_rows(
            outdir / "partition_global.csv",
            ["group", "index", "global_index", "cluster"],
            (
                (labels[g], i, int(offsets[g] + i), int(est.labels[offsets[g] + i]))
                for g in range(G)
                for i in range(data.sizes[g])
            ),
        )
        sim, group_part = group_similarity(samples, seed=seed)
        write_matrix_csv(outdir / "group_similarity.csv", sim, labels)
        _write_rows(
            outdir / "group_partition.csv",
            ["group", "cluster"],
            ((labels[g], int(group_part.labels[g])) for g in range(G)),
        )

    dx = grid_density.spacing
    pairwise = np.zeros((G, G))
    for g in range(G):
        for h in range(g + 1, G):
            pairwise[g, h] = pairwise[h, g] = tv_distance(
                grid_density.estimate[g], grid_density.estimate[h], dx
            )
    write_matrix_csv(outdir / "pairwise_tv.csv", pairwise, labels)

    if with_draws:
        save_draws(samples, outdir / "draws", wall_clock_s=time.perf_counter() - started)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "input": str(input_path),
        "group_labels": labels,
        "group_sizes": list(data.sizes),
        "config": asdict(config),
        "iterations": iterations,
        "burn_in": burn_in,
        "seed": seed,
        "grid_points": grid_points,
        "level": level,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "wall_clock_s": time.perf_counter() - started,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return samples
