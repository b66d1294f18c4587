"""MLP over dense feature vectors: content-derived static features alone, or
those features concatenated with CNN name embeddings.

Both hidden layers are as wide as the input; each is followed by ReLU and
batch normalization. Inputs are standardized with training-split statistics
before entering the network.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkit
from .numkit import ParamStore

__all__ = [
    "FusionError",
    "DenseFeatureVec",
    "MlpTrainConfig",
    "MlpModel",
    "concat_features",
    "train_mlp",
    "predict_proba",
    "predict_proba_many",
    "load_dense_csv",
    "save_mlp_model",
    "load_mlp_model",
]


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class DenseFeatureVec:
    """A fixed-dimension dense feature vector keyed by its record hash."""

    sha256: str
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FusionError(f"non-finite feature values for {self.sha256[:12]}")

    @property
    def dim(self) -> int:
        return len(self.values)


def concat_features(ember: DenseFeatureVec, emb: DenseFeatureVec) -> DenseFeatureVec:
    """Join static features with a name embedding for the same record;
    static values come first."""
    if ember.sha256 != emb.sha256:
        raise FusionError(f"sha256 mismatch: {ember.sha256[:12]} vs {emb.sha256[:12]}")
    return DenseFeatureVec(ember.sha256, np.concatenate([ember.values, emb.values]))


@dataclass(frozen=True)
class MlpTrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise FusionError("batch_size must be >= 2 (batch normalization)")
        if self.epochs < 1:
            raise FusionError("epochs must be >= 1")


@dataclass
class MlpModel:
    input_dim: int
    store: ParamStore
    feature_mean: np.ndarray
    feature_std: np.ndarray
    seed: int


def _build_store(input_dim: int, rng: np.random.Generator, dtype=np.float32) -> ParamStore:
    store = ParamStore()
    d_in = input_dim
    for i, width in enumerate((input_dim, input_dim, 2)):
        std = np.sqrt(2.0 / d_in)
        store.add(f"fc{i}.w", (rng.standard_normal((d_in, width)) * std).astype(dtype))
        store.add(f"fc{i}.b", np.zeros(width, dtype=dtype))
        if i < 2:
            store.add(f"bn{i}.gamma", np.ones(width, dtype=dtype))
            store.add(f"bn{i}.beta", np.zeros(width, dtype=dtype))
            store.add_buffer(f"bn{i}.running_mean", np.zeros(width, dtype=dtype))
            store.add_buffer(f"bn{i}.running_var", np.ones(width, dtype=dtype))
        d_in = width
    return store


def _forward(m: MlpModel, x: np.ndarray, train_mode: bool) -> tuple[np.ndarray, list]:
    store = m.store
    h = x
    caches: list = []
    for i in range(3):
        h, cache = numkit.dense_forward(h, store[f"fc{i}.w"], store[f"fc{i}.b"])
        caches.append((f"fc{i}", cache))
        if i < 2:
            caches.append((f"relu{i}", (h,)))
            h = np.maximum(h, 0.0)
            h, cache = numkit.batchnorm1d_forward(
                h,
                store[f"bn{i}.gamma"],
                store[f"bn{i}.beta"],
                store[f"bn{i}.running_mean"],
                store[f"bn{i}.running_var"],
                train=train_mode,
            )
            caches.append((f"bn{i}", cache))
    return h, caches


def _backward(m: MlpModel, dlogits: np.ndarray, caches: list) -> None:
    store = m.store
    grad = dlogits
    for tag, cache in reversed(caches):
        if tag.startswith("bn"):
            grad, dgamma, dbeta = numkit.batchnorm1d_backward(grad, cache)
            store.accumulate_grad(f"{tag}.gamma", dgamma)
            store.accumulate_grad(f"{tag}.beta", dbeta)
        elif tag.startswith("relu"):
            grad = numkit.relu_backward(grad, cache)
        elif tag.startswith("fc"):
            grad, dw, db = numkit.dense_backward(grad, cache)
            store.accumulate_grad(f"{tag}.w", dw)
            store.accumulate_grad(f"{tag}.b", db)
        else:
            raise FusionError(f"unknown cache tag {tag!r}")


def train_mlp(X: np.ndarray, y: Sequence, cfg: MlpTrainConfig) -> tuple[MlpModel, list[float]]:
    """Train on [N, D] features and {0,1} labels; hidden widths are set to D.

    A trailing minibatch of size 1 is dropped (batch normalization needs at
    least 2 rows). Returns (model, per-epoch mean loss).
    """
    X = np.asarray(X, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise FusionError("X must be [N, D] with one label per row")
    if X.shape[0] < 2:
        raise FusionError("training requires at least 2 rows")
    if len(np.unique(y)) < 2:
        raise FusionError("training data must contain both classes")
    numkit.check_finite("training features", X)

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    Xs = (X - mean) / std

    rng = np.random.default_rng(cfg.seed)
    model = MlpModel(
        input_dim=X.shape[1],
        store=_build_store(X.shape[1], rng),
        feature_mean=mean,
        feature_std=std,
        seed=cfg.seed,
    )
    n = len(y)
    loss_log: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            logits, caches = _forward(model, Xs[idx], train_mode=True)
            loss, dlogits = numkit.softmax_xent(logits, y[idx])
            if not np.isfinite(loss):
                raise FusionError(f"non-finite loss at epoch {epoch}, batch offset {start}")
            _backward(model, dlogits.astype(logits.dtype), caches)
            numkit.adam_step(model.store, cfg.lr)
            batch_losses.append(loss)
        loss_log.append(float(np.mean(batch_losses)))
    return model, loss_log


def predict_proba_many(m: MlpModel, X: np.ndarray) -> np.ndarray:
    """P(malicious) per row; batch normalization uses running statistics."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise FusionError(f"expected [N, {m.input_dim}] features, got {X.shape}")
    Xs = (X - m.feature_mean) / m.feature_std
    logits, _ = _forward(m, Xs, train_mode=False)
    return numkit.softmax_probs(logits)[:, 1]


def predict_proba(m: MlpModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1 or len(x) != m.input_dim:
        raise FusionError(f"expected a {m.input_dim}-dim vector, got shape {x.shape}")
    return float(predict_proba_many(m, x[None, :])[0])


def load_dense_csv(path: str | Path) -> list[DenseFeatureVec]:
    """Read a dense feature table: header `sha256,f0,...,f{D-1}`."""
    out: list[DenseFeatureVec] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sha256":
            raise FusionError("dense feature CSV must start with a `sha256` header column")
        width = len(header) - 1
        for row in reader:
            if len(row) != width + 1:
                raise FusionError(f"row for {row[0][:12]} has {len(row) - 1} values, expected {width}")
            out.append(DenseFeatureVec(row[0], np.array([float(v) for v in row[1:]], dtype=np.float64)))
    return out


def save_mlp_model(m: MlpModel, path: str | Path, feature_kind: str) -> None:
    doc = {
        "kind": "mlp",
        "feature_kind": feature_kind,
        "input_dim": m.input_dim,
        "seed": m.seed,
        "feature_mean": numkit.tensor_to_payload(m.feature_mean.astype(np.float32)),
        "feature_std": numkit.tensor_to_payload(m.feature_std.astype(np.float32)),
        "state": m.store.state_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_mlp_model(path: str | Path) -> tuple[MlpModel, str]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "mlp":
        raise FusionError(f"not an MLP model file: {path}")
    model = MlpModel(
        input_dim=int(doc["input_dim"]),
        store=ParamStore.from_state_dict(doc["state"]),
        feature_mean=numkit.tensor_from_payload(doc["feature_mean"]),
        feature_std=numkit.tensor_from_payload(doc["feature_std"]),
        seed=int(doc.get("seed", 0)),
    )
    return model, doc.get("feature_kind", "ember")
