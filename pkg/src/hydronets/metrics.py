"""Forecast quality metrics and model evaluation.

Two skill scores are reported alongside raw MSE. ``r2_nse`` compares
against the constant mean-of-labels predictor (the classic
Nash-Sutcliffe efficiency). ``r2_persist`` compares against the
persistence forecast, which predicts that the level ``horizon`` steps
ahead equals the level now; for slow-moving rivers persistence is a much
stronger reference, so this score separates models far better than NSE.
Both are 1 for perfect predictions, 0 for baseline parity, negative when
the model loses to the baseline.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .data import ExampleSet, NormStats
from .errors import HydroNetsError
from .model import FlatLinearParams, HydroNetParams, forward_batch, forward_flat_batch


def mse(preds: np.ndarray, labels: np.ndarray) -> float:
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.shape != labels.shape:
        raise HydroNetsError("shape-mismatch", f"preds {preds.shape} vs labels {labels.shape}")
    if preds.size == 0:
        raise HydroNetsError("empty-metric-input", "cannot score zero examples")
    err = preds - labels
    return float(np.mean(err * err))


def r2_nse(preds: np.ndarray, labels: np.ndarray) -> float:
    """1 - MSE(model) / MSE(constant mean predictor)."""
    model = mse(preds, labels)
    labels = np.asarray(labels, dtype=float)
    baseline = float(np.mean((labels - labels.mean()) ** 2))
    if baseline == 0.0:
        raise HydroNetsError("constant-labels", "labels are constant, mean baseline has zero error")
    return 1.0 - model / baseline

def r2_persist(preds: np.ndarray, labels: np.ndarray, persist: np.ndarray) -> float:
    """1 - MSE(model) / MSE(persistence forecast)."""
    model = mse(preds, labels)
    baseline = mse(persist, labels)
    if baseline == 0.0:
        raise HydroNetsError("zero-persist-error", "persistence forecast is exact, score undefined")
    return 1.0 - model / baseline


@dataclass(frozen=True)
class BasinScore:
    basin_id: str
    n_examples: int
    mse: float
    r2: float
    r2_persist: float


@dataclass(frozen=True)
class MetricsReport:
    scores: tuple[BasinScore, ...]

    def by_basin(self) -> dict[str, BasinScore]:
        return {s.basin_id: s for s in self.scores}

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("basin,n,mse,r2,r2_persist\n")
        for s in self.scores:
            out.write(f"{s.basin_id},{s.n_examples},{s.mse!r},{s.r2!r},{s.r2_persist!r}\n")
        return out.getvalue()


def _score_basin(
    bid: str,
    preds: np.ndarray,
    labels: np.ndarray,
    persist: np.ndarray,
    norm: NormStats | None,
) -> BasinScore:
    # Scores are reported in label units: undo normalization on every
    # series that entered it, including the persistence reference.
    if norm is not None:
        preds = norm.denorm_level(bid, preds)
        labels = norm.denorm_level(bid, labels)
        persist = norm.denorm_level(bid, persist)
    return BasinScore(
        basin_id=bid,
        n_examples=len(labels),
        mse=mse(preds, labels),
        r2=r2_nse(preds, labels),
        r2_persist=r2_persist(preds, labels, persist),
    )


def evaluate(
    p: HydroNetParams | FlatLinearParams,
    examples: ExampleSet,
    norm: NormStats | None = None,
) -> MetricsReport:
    """Score a model on an example set, per basin.

    Tree models are scored at every basin; the flat baseline only at its
    target. Passing the normalization stats converts predictions, labels,
    and the persistence reference back to raw units before scoring.
    """
    if len(examples) == 0:
        raise HydroNetsError("empty-metric-input", "cannot evaluate on zero examples")
    if isinstance(p, FlatLinearParams):
        feats = {bid: examples.features[bid] for bid in p.included}
        preds = forward_flat_batch(p, feats)
        score = _score_basin(p.target, preds, examples.labels[p.target], examples.persist[p.target], norm)
        return MetricsReport(scores=(score,))

    feats = {bid: examples.features[bid] for bid in p.graph.basin_ids}
    _, _, preds = forward_batch(p, feats)
    scores = tuple(
        _score_basin(bid, preds[bid], examples.labels[bid], examples.persist[bid], norm)
        for bid in p.graph.basin_ids
    )
    return MetricsReport(scores=scores)
