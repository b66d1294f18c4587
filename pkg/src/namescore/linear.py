"""L1/L2-regularized logistic regression on binary 3-gram vectors.

The objective is R(w) + C * sum_i log(1 + exp(-y_i * (w.x_i + b))) with
R(w) = ||w||_1 or 0.5 * ||w||_2^2, labels y in {-1, +1}, and an unregularized
bias. Training uses proximal gradient descent with a backtracking line
search, so L1 solutions carry exact zeros from the soft-threshold step.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import numkit
from .corpus import Label
from .evaluate import roc_auc
from .features import NgramIndex, SparseVec

__all__ = [
    "LinearError",
    "Reg",
    "LinearModel",
    "TrainConfig",
    "CvResult",
    "rows_to_csr",
    "labels_to_signs",
    "objective",
    "train_logreg",
    "predict_proba",
    "predict_proba_many",
    "top_features",
    "cross_validate",
    "save_linear_model",
    "load_linear_model",
]

Reg = Literal["l1", "l2"]


class LinearError(ValueError):
    pass


def rows_to_csr(rows: Sequence[SparseVec], dim: int) -> sp.csr_matrix:
    """Stack binary presence vectors into an n x dim CSR matrix."""
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, r in enumerate(rows):
        if r.active_columns and r.active_columns[-1] >= dim:
            raise LinearError(f"row {i} has column {r.active_columns[-1]} >= dim {dim}")
        indptr[i + 1] = indptr[i] + len(r.active_columns)
    indices = np.fromiter(
        (c for r in rows for c in r.active_columns), dtype=np.int64, count=indptr[-1]
    )
    data = np.ones(indptr[-1], dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), dim))


def labels_to_signs(labels: Sequence) -> np.ndarray:
    """Map labels to the {-1, +1} convention (malicious = +1)."""
    out = np.empty(len(labels), dtype=np.float64)
    for i, lab in enumerate(labels):
        if isinstance(lab, Label):
            if lab is Label.UNLABELED:
                raise LinearError("training labels must not be Unlabeled")
            out[i] = 1.0 if lab is Label.MALICIOUS else -1.0
        else:
            v = int(lab)
            if v in (1, +1):
                out[i] = 1.0
            elif v in (0, -1):
                out[i] = -1.0
            else:
                raise LinearError(f"label must be 0/1 or -1/+1, got {lab!r}")
    return out


@dataclass(frozen=True)
class LinearModel:
    w: np.ndarray
    b: float
    reg: Reg
    C: float
    converged: bool = True
    objective_log: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.w)) or not np.isfinite(self.b):
            raise LinearError("model weights must be finite")


@dataclass(frozen=True)
class TrainConfig:
    reg: Reg = "l1"
    C: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise LinearError("C must be positive")
        if self.tol <= 0:
            raise LinearError("tol must be positive")
        if self.max_iter < 1:
            raise LinearError("max_iter must be >= 1")
        if self.reg not in ("l1", "l2"):
            raise LinearError(f"reg must be 'l1' or 'l2', got {self.reg!r}")


def _regularizer(w: np.ndarray, reg: Reg) -> float:
    if reg == "l1":
        return float(np.abs(w).sum())
    return 0.5 * float(w @ w)


def _prox(v: np.ndarray, step: float, reg: Reg) -> np.ndarray:
    if reg == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - step, 0.0)
    return v / (1.0 + step)


def _loss_and_grad(
    X: sp.csr_matrix, y: np.ndarray, w: np.ndarray, b: float, C: float
) -> tuple[float, np.ndarray, float]:
    margins = y * (X @ w + b)
    loss = C * float(np.logaddexp(0.0, -margins).sum())
    # d/dm log(1+exp(-m)) = -sigmoid(-m)
    coef = -C * y * expit(-margins)
    return loss, X.T @ coef, float(coef.sum())


def _loss_only(X: sp.csr_matrix, y: np.ndarray, w: np.ndarray, b: float, C: float) -> float:
    margins = y * (X @ w + b)
    return C * float(np.logaddexp(0.0, -margins).sum())


def objective(m: LinearModel, X: Sequence[SparseVec] | sp.csr_matrix, y: Sequence) -> float:
    """Exact regularized objective value on the given data."""
    Xc = X if sp.issparse(X) else rows_to_csr(X, len(m.w))
    ys = y if isinstance(y, np.ndarray) and y.dtype == np.float64 else labels_to_signs(y)
    if Xc.shape[0] != len(ys) or len(ys) == 0:
        raise LinearError("X and y must be non-empty and equal-length")
    return _regularizer(m.w, m.reg) + _loss_only(Xc, ys, m.w, m.b, m.C)


def train_logreg(
    X: Sequence[SparseVec] | sp.csr_matrix,
    y: Sequence,
    cfg: TrainConfig,
    dim: int | None = None,
) -> LinearModel:
    """Proximal gradient descent with backtracking on the logistic objective.

    Deterministic (zero initialization); the recorded objective sequence is
    non-increasing. Returns converged=False when max_iter is exhausted
    before the relative objective decrease falls below cfg.tol.
    """
    if sp.issparse(X):
        Xc = X.tocsr()
    else:
        if dim is None:
            raise LinearError("dim is required when X is a list of sparse vectors")
        Xc = rows_to_csr(X, dim)
    ys = labels_to_signs(y)
    if Xc.shape[0] != len(ys) or len(ys) == 0:
        raise LinearError("X and y must be non-empty and equal-length")
    if not (np.any(ys > 0) and np.any(ys < 0)):
        raise LinearError("training data must contain both classes")

    w = np.zeros(Xc.shape[1], dtype=np.float64)
    b = 0.0
    loss, gw, gb = _loss_and_grad(Xc, ys, w, b, cfg.C)
    obj = loss + _regularizer(w, cfg.reg)
    log = [obj]
    step = 1.0
    converged = False
    for _ in range(cfg.max_iter):
        # Backtrack until the quadratic upper bound holds at the prox point.
        while True:
            w_new = _prox(w - step * gw, step, cfg.reg)
            b_new = b - step * gb
            dw = w_new - w
            db = b_new - b
            quad = loss + gw @ dw + gb * db + (dw @ dw + db * db) / (2.0 * step)
            loss_new = _loss_only(Xc, ys, w_new, b_new, cfg.C)
            if loss_new <= quad + 1e-12 * max(1.0, abs(loss)):
                break
            step *= 0.5
            if step < 1e-18:
                raise LinearError("line search failed: step underflow")
        w, b, loss = w_new, b_new, loss_new
        obj_new = loss + _regularizer(w, cfg.reg)
        log.append(obj_new)
        if obj - obj_new <= cfg.tol * max(1.0, abs(obj)):
            obj = obj_new
            converged = True
            break
        obj = obj_new
        loss, gw, gb = _loss_and_grad(Xc, ys, w, b, cfg.C)
        step = min(step * 2.0, 1e6)
    return LinearModel(
        w=w, b=b, reg=cfg.reg, C=cfg.C, converged=converged, objective_log=tuple(log)
    )


def predict_proba(m: LinearModel, x: SparseVec) -> float:
    """P(malicious) = sigmoid(w.x + b)."""
    cols = np.asarray(x.active_columns, dtype=np.int64)
    if cols.size and cols[-1] >= len(m.w):
        raise LinearError(f"column {cols[-1]} out of range for dim {len(m.w)}")
    z = float(m.w[cols].sum()) + m.b
    return float(expit(z))


def predict_proba_many(m: LinearModel, X: Sequence[SparseVec] | sp.csr_matrix) -> np.ndarray:
    Xc = X if sp.issparse(X) else rows_to_csr(X, len(m.w))
    return expit(Xc @ m.w + m.b)


def top_features(
    m: LinearModel, idx: NgramIndex, k: int
) -> tuple[list[tuple[str, float]], list[tuple[str, float]]]:
    """(most-benign grams, most-malicious grams) with their weights.

    Malicious = k largest weights in descending order; benign = k most
    negative in ascending order; ties broken by column id.
    """
    if k < 1:
        raise LinearError("k must be >= 1")
    if idx.dim != len(m.w):
        raise LinearError(f"index dim {idx.dim} != model dim {len(m.w)}")
    grams = [""] * idx.dim
    for gram, col in idx.gram_to_column.items():
        grams[col] = gram
    order_mal = sorted(range(idx.dim), key=lambda c: (-m.w[c], c))[:k]
    order_ben = sorted(range(idx.dim), key=lambda c: (m.w[c], c))[:k]
    malicious = [(grams[c], float(m.w[c])) for c in order_mal]
    benign = [(grams[c], float(m.w[c])) for c in order_ben]
    return benign, malicious


@dataclass(frozen=True)
class CvResult:
    grid: tuple[float, ...]
    fold_scores: tuple[tuple[float, ...], ...]  # per C, per fold validation AUC
    best_C: float


DEFAULT_CV_GRID = tuple(float(c) for c in np.logspace(-3, 3, 9))


def _stratified_folds(ys: np.ndarray, k_folds: int, seed: int) -> list[np.ndarray]:
    """Shuffle each class and deal indices round-robin into k folds."""
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k_folds)]
    for cls in (1.0, -1.0):
        idx = [int(i) for i in np.nonzero(ys == cls)[0]]
        if len(idx) < k_folds:
            raise LinearError(
                f"class {cls:+.0f} has {len(idx)} examples, fewer than {k_folds} folds"
            )
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[j % k_folds].append(i)
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def cross_validate(
    X: Sequence[SparseVec] | sp.csr_matrix,
    y: Sequence,
    grid: Sequence[float] = DEFAULT_CV_GRID,
    k_folds: int = 5,
    reg: Reg = "l1",
    seed: int = 0,
    dim: int | None = None,
    tol: float = 1e-8,
    max_iter: int = 2000,
) -> CvResult:
    """Stratified k-fold cross-validation scored by validation AUC.

    best_C attains the highest mean fold score; ties resolve to the smaller
    C (and to the earlier grid entry among duplicates).
    """
    if k_folds < 2:
        raise LinearError("k_folds must be >= 2")
    if not grid:
        raise LinearError("grid must be non-empty")
    if sp.issparse(X):
        Xc = X.tocsr()
    else:
        if dim is None:
            raise LinearError("dim is required when X is a list of sparse vectors")
        Xc = rows_to_csr(X, dim)
    ys = labels_to_signs(y)
    folds = _stratified_folds(ys, k_folds, seed)
    all_idx = np.arange(len(ys))

    fold_scores: list[tuple[float, ...]] = []
    for c_val in grid:
        scores = []
        for f in folds:
            val_mask = np.zeros(len(ys), dtype=bool)
            val_mask[f] = True
            tr = all_idx[~val_mask]
            cfg = TrainConfig(reg=reg, C=float(c_val), tol=tol, max_iter=max_iter, seed=seed)
            model = train_logreg(Xc[tr], ys[tr], cfg)
            probs = predict_proba_many(model, Xc[f])
            scores.append(roc_auc(probs, ((ys[f] + 1) / 2).astype(int)).auc)
        fold_scores.append(tuple(scores))

    best_i = 0
    best_mean = float(np.mean(fold_scores[0]))
    for i in range(1, len(grid)):
        mean_i = float(np.mean(fold_scores[i]))
        if mean_i > best_mean or (mean_i == best_mean and grid[i] < grid[best_i]):
            best_i, best_mean = i, mean_i
    return CvResult(
        grid=tuple(float(c) for c in grid),
        fold_scores=tuple(fold_scores),
        best_C=float(grid[best_i]),
    )


# --------------------------------------------------------------------------
# Model file I/O
# --------------------------------------------------------------------------


def save_linear_model(m: LinearModel, idx: NgramIndex, path: str | Path) -> None:
    """Write the model with a content hash of the gram index it was trained
    against; prediction must refuse an index whose hash mismatches."""
    doc = {
        "kind": "linear",
        "reg": m.reg,
        "C": m.C,
        "bias": m.b,
        "weights": numkit.tensor_to_payload(m.w.astype(np.float64)),
        "ngram_index_ref": idx.content_hash(),
        "converged": m.converged,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_linear_model(path: str | Path) -> tuple[LinearModel, str]:
    """Returns (model, ngram_index_ref hash)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "linear":
        raise LinearError(f"not a linear model file: {path}")
    model = LinearModel(
        w=numkit.tensor_from_payload(doc["weights"]),
        b=float(doc["bias"]),
        reg=doc["reg"],
        C=float(doc["C"]),
        converged=bool(doc.get("converged", True)),
    )
    return model, doc["ngram_index_ref"]


def check_index_ref(index_ref: str, idx: NgramIndex) -> None:
    """Refuse to pair a model with an index whose content hash mismatches."""
    actual = idx.content_hash()
    if actual != index_ref:
        raise LinearError(
            f"ngram index hash mismatch: model expects {index_ref[:12]}..., got {actual[:12]}..."
        )
