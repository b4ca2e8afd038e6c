"""Loss, analytic gradients, and the training loop.

Gradients for the tree model are computed by hand with reverse-mode
accumulation over the region graph: basins are processed drain-first so
each basin's embedding gradient already includes the contribution routed
back through every downstream combiner. The flat baseline is ordinary
linear least squares machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ExampleSet
from .errors import HydroNetsError
from .model import (
    FlatLinearParams,
    HydroNetParams,
    flat_design_matrix,
    forward_batch,
    forward_flat_batch,
)


@dataclass(frozen=True)
class LossWeights:
    """Per-basin loss weights, normalized to sum to one."""

    weights: dict[str, float]

    @classmethod
    def uniform(cls, basin_ids: tuple[str, ...]) -> "LossWeights":
        w = 1.0 / len(basin_ids)
        return cls({bid: w for bid in basin_ids})

    @classmethod
    def focused(cls, basin_ids: tuple[str, ...], target: str, alpha: float = 0.9) -> "LossWeights":
        """Weight ``alpha`` on the target, the rest spread uniformly."""
        if target not in basin_ids:
            raise HydroNetsError("unknown-basin", f"focus target {target!r} not in basin set")
        if len(basin_ids) == 1:
            return cls({target: 1.0})
        rest = (1.0 - alpha) / (len(basin_ids) - 1)
        return cls({bid: (alpha if bid == target else rest) for bid in basin_ids})

    def normalized(self) -> "LossWeights":
        total = sum(self.weights.values())
        if total <= 0:
            raise HydroNetsError("invalid-config", "loss weights must have positive sum")
        return LossWeights({bid: w / total for bid, w in self.weights.items()})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def check(self) -> None:
        if self.learning_rate < 0 or self.epochs < 1 or self.batch_size < 1:
            raise HydroNetsError("invalid-config", f"bad training config: {self}")
        if self.optimizer not in ("adam", "sgd"):
            raise HydroNetsError("invalid-config", f"unknown optimizer {self.optimizer!r}")


def weighted_mse_loss(
    preds: dict[str, np.ndarray], labels: dict[str, np.ndarray], w: LossWeights
) -> float:
    """Sum over basins of weight times batch-mean squared error."""
    total = 0.0
    for bid, weight in w.weights.items():
        err = preds[bid] - labels[bid]
        total += weight * float(np.mean(err * err))
    return total


def backward_hydronet(
    p: HydroNetParams,
    features: dict[str, np.ndarray],
    labels: dict[str, np.ndarray],
    w: LossWeights,
) -> tuple[float, HydroNetParams]:
    """Loss and analytic gradient for one batch.

    The gradient is returned in a parameter-shaped container so it packs
    with the same layout as the parameters themselves.
    """
    combined, embeddings, preds = forward_batch(p, features)
    loss = weighted_mse_loss(preds, labels, w)

    t, k, d_x = p.dims.window, p.dims.embedding, p.dims.channels
    batch = next(iter(features.values())).shape[0]

    g_shared_w = np.zeros_like(p.shared_w)
    g_shared_b = np.zeros_like(p.shared_b)
    g_combiner_w = {bid: np.zeros_like(m) for bid, m in p.combiner_w.items()}
    g_combiner_b = {bid: np.zeros_like(v) for bid, v in p.combiner_b.items()}
    g_head_w = {bid: np.zeros_like(v) for bid, v in p.head_w.items()}
    g_head_b = {bid: 0.0 for bid in p.head_b}

    # dL/dE_i accumulates the head term plus anything routed back from
    # downstream combiners, hence the reverse topological sweep.
    g_emb = {bid: np.zeros((batch, t, k)) for bid in p.graph.basin_ids}

    for bid in reversed(p.graph.topo_order):
        weight = w.weights.get(bid, 0.0)
        if weight:
            g_pred = 2.0 * weight * (preds[bid] - labels[bid]) / batch    # (B,)
            e_flat = embeddings[bid].reshape(batch, t * k)
            g_head_w[bid] += g_pred @ e_flat
            g_head_b[bid] += float(np.sum(g_pred))
            g_emb[bid] += (g_pred[:, None] * p.head_w[bid]).reshape(batch, t, k)

        g_e = g_emb[bid]
        u = np.concatenate([features[bid], combined[bid]], axis=2)       # (B, T, d_x+K)
        g_shared_w += np.einsum("btk,btu->ku", g_e, u)
        g_shared_b += g_e.sum(axis=(0, 1))
        g_c = g_e @ p.shared_w[:, d_x:]                                  # (B, T, K)

        srcs = p.graph.upstream[bid]
        if srcs:
            stacked = np.concatenate([embeddings[j] for j in srcs], axis=2)
            g_combiner_w[bid] += np.einsum("btk,btv->kv", g_c, stacked)
            g_combiner_b[bid] += g_c.sum(axis=(0, 1))
            g_stacked = g_c @ p.combiner_w[bid]                          # (B, T, |S|*K)
            for idx, j in enumerate(srcs):
                g_emb[j] += g_stacked[:, :, idx * k : (idx + 1) * k]

    grad = HydroNetParams(
        graph=p.graph, dims=p.dims, shared_w=g_shared_w, shared_b=g_shared_b,
        combiner_w=g_combiner_w, combiner_b=g_combiner_b, head_w=g_head_w, head_b=g_head_b,
    )
    return loss, grad


def backward_flat(
    p: FlatLinearParams, features: dict[str, np.ndarray], labels: np.ndarray
) -> tuple[float, FlatLinearParams]:
    """Loss and gradient of mean squared error at the target basin."""
    design = flat_design_matrix(p, features)
    preds = design @ p.weights + p.bias
    err = preds - labels
    batch = len(labels)
    loss = float(np.mean(err * err))
    g_pred = 2.0 * err / batch
    return loss, FlatLinearParams(
        target=p.target, included=p.included, dims=p.dims,
        weights=g_pred @ design, bias=float(np.sum(g_pred)),
    )


def finite_difference_grad(loss_fn, params, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` (vector -> float) at the
    packed parameter vector of ``params``."""
    base = params.pack()
    grad = np.zeros_like(base)
    for i in range(len(base)):
        bumped = base.copy()
        bumped[i] = base[i] + eps
        up = loss_fn(params.unpack(bumped))
        bumped[i] = base[i] - eps
        down = loss_fn(params.unpack(bumped))
        grad[i] = (up - down) / (2.0 * eps)
    return grad


@dataclass
class TrainResult:
    params: HydroNetParams | FlatLinearParams
    history: list[float] = field(default_factory=list)    # full-set loss per epoch


class _Optimizer:
    def __init__(self, cfg: TrainConfig, n: int):
        self.cfg = cfg
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, vector: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            return vector - cfg.learning_rate * grad
        self.t += 1
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad * grad
        m_hat = self.m / (1 - cfg.beta1 ** self.t)
        v_hat = self.v / (1 - cfg.beta2 ** self.t)
        return vector - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _stack_features(examples: ExampleSet, basin_ids: tuple[str, ...]) -> dict[str, np.ndarray]:
    return {bid: examples.features[bid] for bid in basin_ids}


def _check_not_diverged(loss: float, epoch: int) -> None:
    if not np.isfinite(loss):
        raise HydroNetsError("diverged", f"loss became non-finite at epoch {epoch}")


def train(
    p: HydroNetParams, examples: ExampleSet, cfg: TrainConfig, w: LossWeights | None = None
) -> TrainResult:
    """Mini-batch gradient descent on the weighted loss.

    The input parameters are left untouched; per-epoch shuffles derive from
    ``(cfg.seed, epoch)`` so runs replay exactly.
    """
    cfg.check()
    if w is None:
        w = LossWeights.uniform(p.graph.basin_ids)
    w = w.normalized()
    basin_ids = p.graph.basin_ids
    n = len(examples)
    if n == 0:
        raise HydroNetsError("empty-train", "no training examples")

    vector = p.pack().copy()
    opt = _Optimizer(cfg, len(vector))
    history: list[float] = []
    all_feats = _stack_features(examples, basin_ids)
    all_labels = {bid: examples.labels[bid] for bid in basin_ids}

    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            feats = {bid: all_feats[bid][idx] for bid in basin_ids}
            labels = {bid: all_labels[bid][idx] for bid in basin_ids}
            current = p.unpack(vector)
            loss, grad = backward_hydronet(current, feats, labels, w)
            _check_not_diverged(loss, epoch)
            vector = opt.step(vector, grad.pack())
        current = p.unpack(vector)
        _, _, preds = forward_batch(current, all_feats)
        epoch_loss = weighted_mse_loss(preds, all_labels, w)
        _check_not_diverged(epoch_loss, epoch)
        history.append(epoch_loss)

    return TrainResult(params=p.unpack(vector), history=history)


def train_flat(p: FlatLinearParams, examples: ExampleSet, cfg: TrainConfig) -> TrainResult:
    """Same loop for the flat baseline (loss at the target basin only)."""
    cfg.check()
    n = len(examples)
    if n == 0:
        raise HydroNetsError("empty-train", "no training examples")

    vector = p.pack().copy()
    opt = _Optimizer(cfg, len(vector))
    history: list[float] = []
    all_feats = _stack_features(examples, p.included)
    all_labels = examples.labels[p.target]

    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            feats = {bid: all_feats[bid][idx] for bid in p.included}
            current = p.unpack(vector)
            loss, grad = backward_flat(current, feats, all_labels[idx])
            _check_not_diverged(loss, epoch)
            vector = opt.step(vector, grad.pack())
        current = p.unpack(vector)
        preds = forward_flat_batch(current, all_feats)
        err = preds - all_labels
        epoch_loss = float(np.mean(err * err))
        _check_not_diverged(epoch_loss, epoch)
        history.append(epoch_loss)

    return TrainResult(params=p.unpack(vector), history=history)
