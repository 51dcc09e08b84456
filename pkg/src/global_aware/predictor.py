"""Global attention prediction from per-token source features.

A linear head with exponential activation, ``g_hat_i = exp(W . e_i + b_i)``,
trained by full-batch gradient descent on the Euclidean distance to the
teacher-forced global attention. An optional fixed neighbour-averaging
transform mixes context into the features first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import GlobalAttention, GlobalAwareError, LengthMismatch, SourceDocument

CORRUPTION_FLOOR = 1e-6
_MAX_EXPONENT = 50.0


class MissingFeatures(GlobalAwareError, ValueError):
    pass


class DimensionMismatch(GlobalAwareError, ValueError):
    pass


class EmptyDataset(GlobalAwareError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PredictorParams:
    """Weights ``W`` (d,), bias ``b`` (n,) per position or (1,) shared."""

    W: np.ndarray
    b: np.ndarray
    learning_rate: float = 0.1
    epochs: int = 300
    seed: int = 0
    context_window: int = 0
    loss_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "W", np.array(self.W, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "b", np.array(self.b, dtype=np.float64).reshape(-1))
        if self.b.size == 0:
            raise ValueError("bias must have at least one entry")

    @property
    def feature_dim(self) -> int:
        return self.W.shape[0]

    @property
    def per_position(self) -> bool:
        return self.b.shape[0] > 1

    def replace(self, **changes) -> "PredictorParams":
        return replace(self, **changes)


def init_params(feature_dim: int, source_len: Optional[int] = None, *,
                learning_rate: float = 0.1, epochs: int = 300, seed: int = 0,
                context_window: int = 0) -> PredictorParams:
    """Small random weights and zero bias; ``source_len=None`` gives a shared bias."""
    rng = np.random.default_rng(seed)
    W = 0.01 * rng.standard_normal(feature_dim)
    b = np.zeros(1 if source_len is None else source_len)
    return PredictorParams(W, b, learning_rate, epochs, seed, context_window)


def init_for_dataset(dataset: Sequence, **kwargs) -> PredictorParams:
    """Per-position bias when every source has the same length, else shared."""
    if not dataset:
        raise EmptyDataset("dataset is empty")
    sources = [src for src, _ in dataset]
    if sources[0].features is None:
        raise MissingFeatures("sources carry no features")
    lengths = {len(s) for s in sources}
    n = lengths.pop() if len(lengths) == 1 else None
    return init_params(sources[0].feature_dim, n, **kwargs)


def context_features(features: np.ndarray, window: int) -> np.ndarray:
    """Average each feature vector with its neighbours inside ``window``."""
    if window <= 1:
        return features
    half = window // 2
    n = features.shape[0]
    csum = np.vstack([np.zeros((1, features.shape[1])), np.cumsum(features, axis=0)])
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)[:, None]


@dataclass(frozen=True, eq=False)
class PredictedAttention:
    values: np.ndarray

    @property
    def predicted_optimal_length(self) -> float:
        return float(self.values.sum())

    def as_global(self) -> GlobalAttention:
        return GlobalAttention(self.values)


def _inputs(params: PredictorParams, source: SourceDocument) -> np.ndarray:
    if source.features is None:
        raise MissingFeatures("source carries no features")
    if source.feature_dim != params.feature_dim:
        raise DimensionMismatch(
            f"feature dimension {source.feature_dim} != predictor dimension {params.feature_dim}")
    if params.per_position and len(source) != params.b.shape[0]:
        raise DimensionMismatch(
            f"source length {len(source)} != per-position bias length {params.b.shape[0]}")
    return context_features(source.features, params.context_window)


def predict(params: PredictorParams, source: SourceDocument) -> PredictedAttention:
    feats = _inputs(params, source)
    z = feats @ params.W + params.b
    return PredictedAttention(np.exp(np.minimum(z, _MAX_EXPONENT)))


def loss(g_hat, g) -> float:
    """Euclidean distance between predicted and target attention."""
    a = getattr(g_hat, "values", g_hat)
    b = getattr(g, "values", g)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(b.shape[0], a.shape[0])
    return float(np.linalg.norm(a - b))


def loss_and_gradient(params: PredictorParams, source: SourceDocument, g):
    """Loss for one example and its gradient with respect to ``W`` and ``b``."""
    feats = _inputs(params, source)
    target = np.asarray(getattr(g, "values", g), dtype=np.float64)
    z = np.minimum(feats @ params.W + params.b, _MAX_EXPONENT)
    g_hat = np.exp(z)
    if target.shape != g_hat.shape:
        raise LengthMismatch(g_hat.shape[0], target.shape[0])
    resid = g_hat - target
    L = float(np.linalg.norm(resid))
    if L == 0.0:
        return 0.0, np.zeros_like(params.W), np.zeros_like(params.b)
    dz = resid * g_hat / L
    dW = feats.T @ dz
    db = dz if params.per_position else np.array([dz.sum()])
    return L, dW, db


def dataset_loss(params: PredictorParams, dataset: Sequence) -> float:
    return float(np.mean([loss(predict(params, s), g) for s, g in dataset]))


def train(params: PredictorParams, dataset: Sequence) -> PredictorParams:
    """Full-batch gradient descent on the mean per-example loss.

    ``dataset`` is a sequence of ``(source, global_attention)`` pairs.
    The returned params carry the per-epoch loss trajectory (initial loss
    first).
    """
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    W, b = params.W.copy(), params.b.copy()
    history = []
    m = len(dataset)
    for _ in range(params.epochs):
        cur = params.replace(W=W, b=b)
        total, gW, gb = 0.0, np.zeros_like(W), np.zeros_like(b)
        # summed in index order so results do not depend on scheduling
        for source, g in dataset:
            L, dW, db = loss_and_gradient(cur, source, g)
            total += L
            gW += dW
            gb += db
        history.append(total / m)
        W = W - params.learning_rate * gW / m
        b = b - params.learning_rate * gb / m
    final = params.replace(W=W, b=b)
    history.append(dataset_loss(final, dataset))
    return final.replace(loss_history=tuple(history))


def r2_score(target, predicted) -> float:
    """Coefficient of determination of one predicted attention vector."""
    o = np.asarray(getattr(target, "values", target), dtype=np.float64)
    p = np.asarray(getattr(predicted, "values", predicted), dtype=np.float64)
    ss_tot = float(((o - o.mean()) ** 2).sum())
    ss_res = float(((o - p) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


def corrupt(g: GlobalAttention, sigma: float, seed: int) -> GlobalAttention:
    """Add seeded Gaussian noise scaled by ``sigma * mean(g)``, clamped at 1e-6."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return GlobalAttention(g.values.copy())
    noise = np.random.default_rng(seed).standard_normal(len(g))
    vals = g.values + sigma * g.values.mean() * noise
    return GlobalAttention(np.maximum(vals, CORRUPTION_FLOOR))


def save_params(params: PredictorParams, path) -> None:
    data = {
        "W": params.W.tolist(),
        "b": params.b.tolist(),
        "d": params.feature_dim,
        "meta": {
            "learning_rate": params.learning_rate,
            "epochs": params.epochs,
            "seed": params.seed,
            "context_window": params.context_window,
            "loss_history": list(params.loss_history),
        },
    }
    Path(path).write_text(json.dumps(data))


def load_params(path) -> PredictorParams:
    data = json.loads(Path(path).read_text())
    meta = data.get("meta", {})
    params = PredictorParams(
        data["W"], data["b"],
        learning_rate=meta.get("learning_rate", 0.1),
        epochs=meta.get("epochs", 300),
        seed=meta.get("seed", 0),
        context_window=meta.get("context_window", 0),
        loss_history=tuple(meta.get("loss_history", ())),
    )
    if params.feature_dim != int(data["d"]):
        raise DimensionMismatch("checkpoint 'd' does not match the weight vector")
    return params
