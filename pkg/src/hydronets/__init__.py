"""River-network-structured linear forecasting.

A region of gauged basins forms an inverted tree draining to a single
outlet. The model mirrors that tree: per-basin combiners merge upstream
state, one shared linear map produces temporal embeddings, and per-basin
heads turn embeddings into water level forecasts. The package also ships
the flat linear baseline, persistence-referenced skill metrics, a
synthetic region generator, and an experiment harness with seed-exact
reproducibility.
"""

from .data import (
    ExampleSet,
    NormStats,
    SeriesStore,
    SynthConfig,
    dump_series,
    fit_norm_stats,
    generate_synthetic,
    load_series,
    prepare_datasets,
    split_chronological,
    window_examples,
)
from .errors import HydroNetsError
from .experiments import (
    ExperimentConfig,
    ReportTable,
    emit_report,
    run_all_basins,
    run_depth_experiment,
    run_scarcity,
)
from .metrics import MetricsReport, evaluate, mse, r2_nse, r2_persist
from .model import (
    Dims,
    FlatLinearParams,
    HydroNetParams,
    forward_flat,
    forward_hydronet,
    init_flat,
    init_hydronet,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .region import (
    Basin,
    RegionGraph,
    ValidationReport,
    drain_of,
    dump_region,
    height,
    parse_region,
    prune_to_depth,
    sources_of,
    topological_order,
    validate,
)
from .training import (
    LossWeights,
    TrainConfig,
    TrainResult,
    backward_flat,
    backward_hydronet,
    finite_difference_grad,
    train,
    train_flat,
    weighted_mse_loss,
)

__all__ = [
    "Basin",
    "Dims",
    "ExampleSet",
    "ExperimentConfig",
    "FlatLinearParams",
    "HydroNetParams",
    "HydroNetsError",
    "LossWeights",
    "MetricsReport",
    "NormStats",
    "RegionGraph",
    "ReportTable",
    "SeriesStore",
    "SynthConfig",
    "TrainConfig",
    "TrainResult",
    "ValidationReport",
    "backward_flat",
    "backward_hydronet",
    "drain_of",
    "dump_region",
    "dump_series",
    "emit_report",
    "evaluate",
    "finite_difference_grad",
    "fit_norm_stats",
    "forward_flat",
    "forward_hydronet",
    "generate_synthetic",
    "height",
    "init_flat",
    "init_hydronet",
    "load_checkpoint",
    "load_series",
    "mse",
    "param_count",
    "parse_region",
    "prepare_datasets",
    "prune_to_depth",
    "r2_nse",
    "r2_persist",
    "run_all_basins",
    "run_depth_experiment",
    "run_scarcity",
    "save_checkpoint",
    "sources_of",
    "split_chronological",
    "topological_order",
    "train",
    "train_flat",
    "validate",
    "weighted_mse_loss",
    "window_examples",
]
