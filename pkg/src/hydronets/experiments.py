"""Experiment harness: seed-replicated training runs reduced to small
machine-readable report tables.

Three runners cover the questions the model family is built for: how much
upstream graph depth helps prediction at the drain, how the tree model
compares with the flat baseline across all basins of a region, and how
that comparison shifts when training data is scarce. Each run writes its
aggregated table, the per-seed values behind it, and a manifest pinning
the config and input hashes, so a re-run reproduces every artifact
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .data import (
    ExampleSet,
    NormStats,
    SeriesStore,
    SynthConfig,
    dump_series,
    generate_synthetic,
    load_series,
    prepare_datasets,
)
from .errors import HydroNetsError
from .metrics import evaluate
from .model import Dims, init_flat, init_hydronet
from .region import RegionGraph, drain_of, dump_region, height, parse_region, prune_to_depth
from .training import LossWeights, TrainConfig, train, train_flat

MODEL_KINDS = ("linear", "hydronets")
METRICS = ("r2", "r2_persist")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run needs, minus the runner-specific lists
    (target basins, training sizes) which can also live here as defaults."""

    dims: Dims
    train: TrainConfig = TrainConfig()
    seeds: tuple[int, ...] = tuple(range(10))
    metric: str = "r2_persist"
    out_dir: str = "runs"
    region_path: str | None = None
    series_path: str | None = None
    synth: SynthConfig | None = None
    train_frac: float = 0.8
    alpha: float = 0.9
    flat_depth: int = 2
    workers: int = 1
    basins: tuple[str, ...] | None = None
    sizes: tuple[int, ...] | None = None

    def check(self) -> None:
        self.dims.check()
        self.train.check()
        if not self.seeds:
            raise HydroNetsError("invalid-config", "need at least one seed")
        if self.metric not in METRICS:
            raise HydroNetsError("invalid-config", f"metric must be one of {METRICS}")
        from_files = self.region_path is not None and self.series_path is not None
        if from_files == (self.synth is not None):
            raise HydroNetsError(
                "invalid-config", "give either region+series paths or a synth config, not both"
            )
        if not (0.0 < self.train_frac < 1.0):
            raise HydroNetsError("invalid-config", "train_frac must lie in (0, 1)")
        if not (0.0 < self.alpha <= 1.0):
            raise HydroNetsError("invalid-config", "alpha must lie in (0, 1]")
        if self.flat_depth < 1 or self.workers < 1:
            raise HydroNetsError("invalid-config", "flat_depth and workers must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise HydroNetsError("invalid-config", f"bad experiment config JSON: {e.msg}") from e
        known = {
            "dims", "train", "seeds", "metric", "out_dir", "region", "series",
            "synth", "train_frac", "alpha", "flat_depth", "workers", "basins", "sizes",
        }
        unknown = set(doc) - known
        if unknown:
            raise HydroNetsError("invalid-config", f"unknown config fields: {sorted(unknown)}")
        if "dims" not in doc:
            raise HydroNetsError("invalid-config", "config needs a dims section")
        kwargs: dict = {"dims": _dims_from(doc["dims"])}
        if "train" in doc:
            kwargs["train"] = _train_from(doc["train"])
        if "seeds" in doc:
            kwargs["seeds"] = tuple(int(s) for s in doc["seeds"])
        if "synth" in doc:
            kwargs["synth"] = SynthConfig.from_dict(doc["synth"])
        kwargs["region_path"] = doc.get("region")
        kwargs["series_path"] = doc.get("series")
        for key in ("metric", "out_dir", "train_frac", "alpha", "flat_depth", "workers"):
            if key in doc:
                kwargs[key] = doc[key]
        if "basins" in doc:
            kwargs["basins"] = tuple(doc["basins"])
        if "sizes" in doc:
            kwargs["sizes"] = tuple(int(c) for c in doc["sizes"])
        cfg = cls(**kwargs)
        cfg.check()
        return cfg

    def echo(self) -> dict:
        """Config as a manifest-ready dict: exactly the fields that determine
        the run's numbers (so no out_dir and no worker count)."""
        doc = {
            "dims": {
                "window": self.dims.window,
                "embedding": self.dims.embedding,
                "horizon": self.dims.horizon,
                "channels": self.dims.channels,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "optimizer": self.train.optimizer,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "eps": self.train.eps,
            },
            "seeds": list(self.seeds),
            "metric": self.metric,
            "train_frac": self.train_frac,
            "alpha": self.alpha,
            "flat_depth": self.flat_depth,
        }
        if self.synth is not None:
            doc["synth"] = self.synth.to_dict()
        else:
            doc["region"] = self.region_path
            doc["series"] = self.series_path
        return doc


def _dims_from(doc: Mapping) -> Dims:
    unknown = set(doc) - {"window", "embedding", "horizon", "channels"}
    if unknown:
        raise HydroNetsError("invalid-config", f"unknown dims fields: {sorted(unknown)}")
    try:
        return Dims(**{k: int(v) for k, v in doc.items()})
    except TypeError:
        raise HydroNetsError("invalid-config", "dims needs window, embedding, and horizon") from None


def _train_from(doc: Mapping) -> TrainConfig:
    unknown = set(doc) - {
        "learning_rate", "epochs", "batch_size", "seed", "optimizer", "beta1", "beta2", "eps"
    }
    if unknown:
        raise HydroNetsError("invalid-config", f"unknown train fields: {sorted(unknown)}")
    return TrainConfig(**doc)


# --- report tables --------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    key: str
    basin: str
    model: str
    mean: float
    std: float
    n_seeds: int


@dataclass(frozen=True)
class SeedRow:
    key: str
    basin: str
    model: str
    seed: int
    value: float


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ReportRow, ...]
    seed_rows: tuple[SeedRow, ...] = ()

    def seed_values(self, key: str, basin: str, model: str) -> list[float]:
        return [
            r.value for r in self.seed_rows
            if r.key == key and r.basin == basin and r.model == model
        ]


def emit_report(table: ReportTable, fmt: str = "csv") -> str:
    """Render the aggregated table deterministically, numbers at 6 decimal
    places. CSV has a fixed header; JSON is a list of row objects."""
    if fmt == "csv":
        lines = ["key,basin,model,mean,std,n_seeds"]
        for r in table.rows:
            lines.append(f"{r.key},{r.basin},{r.model},{r.mean:.6f},{r.std:.6f},{r.n_seeds}")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        if not table.rows:
            return "[]\n"
        items = [
            '  {"key": %s, "basin": %s, "model": %s, "mean": %.6f, "std": %.6f, "n_seeds": %d}'
            % (json.dumps(r.key), json.dumps(r.basin), json.dumps(r.model), r.mean, r.std, r.n_seeds)
            for r in table.rows
        ]
        return "[\n" + ",\n".join(items) + "\n]\n"
    raise HydroNetsError("invalid-config", f"unknown report format {fmt!r}")


def emit_seed_rows(table: ReportTable) -> str:
    """Full-precision per-seed values backing the aggregated table."""
    lines = ["key,basin,model,seed,value"]
    for r in table.seed_rows:
        lines.append(f"{r.key},{r.basin},{r.model},{r.seed},{r.value!r}")
    return "\n".join(lines) + "\n"


def _aggregate(
    seed_rows: list[SeedRow], keys: list[tuple[str, str, str]]
) -> ReportTable:
    """Reduce per-seed rows to (mean, std) rows in the given (key, basin,
    model) order. Population std, full precision."""
    rows = []
    for key, basin, model in keys:
        values = [r.value for r in seed_rows if (r.key, r.basin, r.model) == (key, basin, model)]
        rows.append(ReportRow(
            key=key, basin=basin, model=model,
            mean=float(np.mean(values)), std=float(np.std(values)), n_seeds=len(values),
        ))
    return ReportTable(rows=tuple(rows), seed_rows=tuple(seed_rows))


# --- shared plumbing ------------------------------------------------------------

def load_inputs(cfg: ExperimentConfig) -> tuple[RegionGraph, SeriesStore, dict[str, str]]:
    """Region graph, series, and sha256 hashes of their canonical text."""
    if cfg.synth is not None:
        g, store = generate_synthetic(cfg.synth)
        region_text, series_text = dump_region(g), dump_series(store)
    else:
        region_text = Path(cfg.region_path).read_text()
        series_text = Path(cfg.series_path).read_text()
        g = parse_region(region_text)
        store = load_series(series_text, g)
    hashes = {
        "region": hashlib.sha256(region_text.encode()).hexdigest(),
        "series": hashlib.sha256(series_text.encode()).hexdigest(),
    }
    return g, store, hashes


def _run_jobs(jobs: list[Callable[[], object]], workers: int) -> list:
    """Execute jobs, optionally on a thread pool. Results come back in job
    order either way, so the reduction cannot depend on scheduling."""
    if workers <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: job(), jobs))


def _metric_at(params, test_set: ExampleSet, stats: NormStats, basin: str, metric: str) -> float:
    return getattr(evaluate(params, test_set, stats).by_basin()[basin], metric)


def _write_run(
    out_dir: str,
    name: str,
    cfg: ExperimentConfig,
    table: ReportTable,
    hashes: dict[str, str],
    extra_echo: dict | None = None,
    extra_files: dict[str, str] | None = None,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"experiment": name, "config": cfg.echo(), "inputs": hashes}
    if extra_echo:
        manifest.update(extra_echo)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "report.csv").write_text(emit_report(table, "csv"))
    (out / "seeds.csv").write_text(emit_seed_rows(table))
    for fname, text in (extra_files or {}).items():
        (out / fname).write_text(text)


# --- runners --------------------------------------------------------------------

def run_depth_experiment(cfg: ExperimentConfig) -> ReportTable:
    """Prediction at the drain as a function of upstream depth.

    For each depth d = 1..height, the region is pruned to the basins within
    d hops of the drain and both model kinds are trained from scratch on
    that subtree, so at every depth they see the same features.
    """
    cfg.check()
    g, store, hashes = load_inputs(cfg)
    drain = drain_of(g)
    depths = range(1, height(g) + 1)

    prepared = {}
    for d in depths:
        sub = prune_to_depth(g, drain, d)
        prepared[d] = (sub, *prepare_datasets(
            store, sub, cfg.dims.window, cfg.dims.horizon, cfg.train_frac
        ))

    def make_job(d: int, seed: int) -> Callable[[], tuple[float, float]]:
        sub, train_set, test_set, stats = prepared[d]
        tc = replace(cfg.train, seed=seed)

        def job() -> tuple[float, float]:
            fp = init_flat(sub, drain, d, cfg.dims, seed)
            fp = train_flat(fp, train_set, tc).params
            lin = _metric_at(fp, test_set, stats, drain, cfg.metric)
            hp = init_hydronet(sub, cfg.dims, seed)
            w = LossWeights.focused(sub.basin_ids, drain, cfg.alpha)
            hp = train(hp, train_set, tc, w).params
            hyd = _metric_at(hp, test_set, stats, drain, cfg.metric)
            return lin, hyd

        return job

    labels = [(d, seed) for d in depths for seed in cfg.seeds]
    results = _run_jobs([make_job(d, seed) for d, seed in labels], cfg.workers)

    seed_rows = []
    for (d, seed), (lin, hyd) in zip(labels, results):
        seed_rows.append(SeedRow(f"depth={d}", drain, "linear", seed, lin))
        seed_rows.append(SeedRow(f"depth={d}", drain, "hydronets", seed, hyd))
    keys = [(f"depth={d}", drain, kind) for d in depths for kind in MODEL_KINDS]
    table = _aggregate(seed_rows, keys)
    _write_run(cfg.out_dir, "depth", cfg, table, hashes)
    return table


@dataclass(frozen=True)
class ComparisonRow:
    basin: str
    linear: float
    hydronets: float

    @property
    def diff(self) -> float:
        # Subtract at full precision; rounding the operands first can be
        # off by one in the last printed digit.
        return self.hydronets - self.linear


def emit_comparison(rows: tuple[ComparisonRow, ...]) -> str:
    lines = ["basin,linear,hydronets,diff"]
    for r in rows:
        lines.append(f"{r.basin},{r.linear:.6f},{r.hydronets:.6f},{r.diff:.6f}")
    return "\n".join(lines) + "\n"


def emit_diff_summary(diffs: list[float], bins: int = 10) -> str:
    """Histogram of the per-basin diff column."""
    counts, edges = np.histogram(diffs, bins=bins)
    lines = ["bin_lo,bin_hi,count"]
    for i, c in enumerate(counts):
        lines.append(f"{edges[i]:.6f},{edges[i + 1]:.6f},{int(c)}")
    return "\n".join(lines) + "\n"


def run_all_basins(
    cfg: ExperimentConfig, targets: tuple[str, ...] | None = None
) -> tuple[ReportTable, tuple[ComparisonRow, ...]]:
    """Tree model vs flat baseline at each target basin.

    The tree model trains on the full region with the loss focused on the
    target (weight alpha there, the rest spread evenly); the flat baseline
    trains on the target's depth-limited subtree.
    """
    cfg.check()
    g, store, hashes = load_inputs(cfg)
    targets = tuple(targets if targets is not None else (cfg.basins or g.basin_ids))
    for bid in targets:
        if bid not in g:
            raise HydroNetsError("unknown-basin", f"target basin {bid!r} not in region")

    train_set, test_set, stats = prepare_datasets(
        store, g, cfg.dims.window, cfg.dims.horizon, cfg.train_frac
    )

    def make_job(target: str, seed: int) -> Callable[[], tuple[float, float]]:
        tc = replace(cfg.train, seed=seed)

        def job() -> tuple[float, float]:
            fp = init_flat(g, target, cfg.flat_depth, cfg.dims, seed)
            fp = train_flat(fp, train_set, tc).params
            lin = _metric_at(fp, test_set, stats, target, cfg.metric)
            hp = init_hydronet(g, cfg.dims, seed)
            w = LossWeights.focused(g.basin_ids, target, cfg.alpha)
            hp = train(hp, train_set, tc, w).params
            hyd = _metric_at(hp, test_set, stats, target, cfg.metric)
            return lin, hyd

        return job

    labels = [(t, seed) for t in targets for seed in cfg.seeds]
    results = _run_jobs([make_job(t, seed) for t, seed in labels], cfg.workers)

    seed_rows = []
    for (t, seed), (lin, hyd) in zip(labels, results):
        seed_rows.append(SeedRow("all-basins", t, "linear", seed, lin))
        seed_rows.append(SeedRow("all-basins", t, "hydronets", seed, hyd))
    keys = [("all-basins", t, kind) for t in targets for kind in MODEL_KINDS]
    table = _aggregate(seed_rows, keys)

    by_key = {(r.basin, r.model): r.mean for r in table.rows}
    comparison = tuple(
        ComparisonRow(basin=t, linear=by_key[(t, "linear")], hydronets=by_key[(t, "hydronets")])
        for t in targets
    )
    _write_run(
        cfg.out_dir, "all-basins", cfg, table, hashes,
        extra_echo={"targets": list(targets)},
        extra_files={
            "comparison.csv": emit_comparison(comparison),
            "diff_summary.csv": emit_diff_summary([r.diff for r in comparison]),
        },
    )
    return table, comparison


def run_scarcity(
    cfg: ExperimentConfig,
    counts: tuple[int, ...] | None = None,
    basins: tuple[str, ...] | None = None,
) -> ReportTable:
    """Both model kinds per basin as the training set shrinks.

    For each count c the training set is cut to its most recent c examples;
    the test tail never changes. The tree model trains once per (c, seed)
    with uniform weights and is read out at every requested basin; the flat
    baseline trains per basin on its depth-limited subtree.
    """
    cfg.check()
    g, store, hashes = load_inputs(cfg)
    counts = tuple(counts if counts is not None else (cfg.sizes or ()))
    if not counts:
        raise HydroNetsError("invalid-config", "scarcity run needs training sizes")
    basins = tuple(basins if basins is not None else (cfg.basins or g.basin_ids))
    for bid in basins:
        if bid not in g:
            raise HydroNetsError("unknown-basin", f"basin {bid!r} not in region")

    train_full, test_set, stats = prepare_datasets(
        store, g, cfg.dims.window, cfg.dims.horizon, cfg.train_frac
    )
    n = len(train_full)
    if max(counts) > n:
        raise HydroNetsError(
            "invalid-config", f"largest training size {max(counts)} exceeds the {n} available"
        )
    cut = {c: train_full.subset(np.arange(n - c, n)) for c in counts}

    def make_tree_job(c: int, seed: int) -> Callable[[], dict[str, float]]:
        tc = replace(cfg.train, seed=seed)

        def job() -> dict[str, float]:
            hp = init_hydronet(g, cfg.dims, seed)
            hp = train(hp, cut[c], tc).params
            report = evaluate(hp, test_set, stats).by_basin()
            return {bid: getattr(report[bid], cfg.metric) for bid in basins}

        return job

    def make_flat_job(c: int, bid: str, seed: int) -> Callable[[], float]:
        tc = replace(cfg.train, seed=seed)

        def job() -> float:
            fp = init_flat(g, bid, cfg.flat_depth, cfg.dims, seed)
            fp = train_flat(fp, cut[c], tc).params
            return _metric_at(fp, test_set, stats, bid, cfg.metric)

        return job

    tree_labels = [(c, seed) for c in counts for seed in cfg.seeds]
    flat_labels = [(c, bid, seed) for c in counts for bid in basins for seed in cfg.seeds]
    jobs = [make_tree_job(c, s) for c, s in tree_labels]
    jobs += [make_flat_job(c, b, s) for c, b, s in flat_labels]
    results = _run_jobs(jobs, cfg.workers)
    tree_results = results[: len(tree_labels)]
    flat_results = results[len(tree_labels):]

    seed_rows = []
    for (c, seed), by_basin in zip(tree_labels, tree_results):
        for bid in basins:
            seed_rows.append(SeedRow(f"train={c}", bid, "hydronets", seed, by_basin[bid]))
    for (c, bid, seed), value in zip(flat_labels, flat_results):
        seed_rows.append(SeedRow(f"train={c}", bid, "linear", seed, value))
    keys = [(f"train={c}", bid, kind) for c in counts for bid in basins for kind in MODEL_KINDS]
    table = _aggregate(seed_rows, keys)
    _write_run(
        cfg.out_dir, "scarcity", cfg, table, hashes,
        extra_echo={"sizes": list(counts), "basins": list(basins)},
    )
    return table
