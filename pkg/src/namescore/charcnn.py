"""Character-level CNN over file names: construction, training, prediction,
and extraction of penultimate-layer name embeddings.

The architecture is a fixed plan: a learned character embedding, six "same"
padded convolutions (kernels 7,7,3,3,3,3) with max-pool 3 after the first,
second, and last, then three dense layers with ReLU and dropout after the
first two. With the default window of 100 the per-layer length trace is
exactly [100, 33, 11, 11, 11, 11, 3].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkit
from .corpus import Corpus, Label
from .features import Vocabulary, encode_chars
from .numkit import ParamStore

__all__ = [
    "CnnError",
    "CnnConfig",
    "CnnModel",
    "REDUCED_TEST_CONFIG",
    "build_model",
    "forward",
    "backward",
    "train",
    "embed",
    "embed_batch",
    "predict_proba",
    "predict_proba_batch",
    "encode_batch",
    "save_cnn_model",
    "load_cnn_model",
]

KERNEL_PLAN = (7, 7, 3, 3, 3, 3)
POOL_LAYERS = (0, 1, 5)
POOL_SIZE = 3
WINDOW_100_TRACE = (100, 33, 11, 11, 11, 11, 3)

CLASS_INDEX = {"benign": 0, "malicious": 1}


class CnnError(ValueError):
    pass


@dataclass(frozen=True)
class CnnConfig:
    vocab_size: int = 300
    embed_dim: int = 300
    window: int = 100
    conv_channels: int = 256
    kernel_sizes: tuple[int, ...] = KERNEL_PLAN
    pool_layers: tuple[int, ...] = POOL_LAYERS
    pool_size: int = POOL_SIZE
    fc_widths: tuple[int, ...] = (1024, 1024, 2)
    dropout_p: float = 0.5

    def __post_init__(self):
        if self.kernel_sizes != KERNEL_PLAN:
            raise CnnError(f"kernel plan must be {KERNEL_PLAN}, got {self.kernel_sizes}")
        if self.pool_layers != POOL_LAYERS or self.pool_size != POOL_SIZE:
            raise CnnError("pool plan must be pool 3 after conv layers 1, 2, and 6")
        if len(self.fc_widths) != 3 or self.fc_widths[2] != 2:
            raise CnnError("fully connected plan must be three layers ending in width 2")
        if min(self.vocab_size, self.embed_dim, self.window, self.conv_channels) < 1:
            raise CnnError("all dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise CnnError("dropout_p must be in [0, 1)")
        trace = self.length_trace()
        if trace[-1] < 1:
            raise CnnError(f"window {self.window} collapses to zero length: trace {trace}")
        if self.window == 100 and trace != WINDOW_100_TRACE:
            raise CnnError(f"window-100 length trace must be {WINDOW_100_TRACE}, got {trace}")

    def length_trace(self) -> tuple[int, ...]:
        """Sequence length after the window and after each conv(+pool) stage."""
        trace = [self.window]
        length = self.window
        for i in range(len(self.kernel_sizes)):
            if i in self.pool_layers:
                length = length // self.pool_size
            trace.append(length)
        return tuple(trace)

    @property
    def flat_dim(self) -> int:
        return self.length_trace()[-1] * self.conv_channels

    def to_json_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "window": self.window,
            "conv_channels": self.conv_channels,
            "kernel_sizes": list(self.kernel_sizes),
            "pool_layers": list(self.pool_layers),
            "pool_size": self.pool_size,
            "fc_widths": list(self.fc_widths),
            "dropout_p": self.dropout_p,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CnnConfig":
        return cls(
            vocab_size=int(obj["vocab_size"]),
            embed_dim=int(obj["embed_dim"]),
            window=int(obj["window"]),
            conv_channels=int(obj["conv_channels"]),
            kernel_sizes=tuple(obj["kernel_sizes"]),
            pool_layers=tuple(obj["pool_layers"]),
            pool_size=int(obj["pool_size"]),
            fc_widths=tuple(obj["fc_widths"]),
            dropout_p=float(obj["dropout_p"]),
        )


#: Small configuration for gradient checks and fast end-to-end tests.
#: Window 27 is the smallest that survives the fixed pool plan (27->9->3->1).
REDUCED_TEST_CONFIG = CnnConfig(
    vocab_size=10, embed_dim=8, window=27, conv_channels=4, fc_widths=(16, 16, 2)
)


@dataclass
class CnnModel:
    config: CnnConfig
    store: ParamStore
    seed: int


def build_model(cfg: CnnConfig, seed: int, dtype=np.float32) -> CnnModel:
    """He fan-in initialization for conv/dense weights, zero biases, and a
    uniform(-0.05, 0.05) embedding table with a learned pad row."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    store.add(
        "embed.table",
        rng.uniform(-0.05, 0.05, size=(cfg.vocab_size + 1, cfg.embed_dim)).astype(dtype),
    )
    c_in = cfg.embed_dim
    for i, k in enumerate(cfg.kernel_sizes):
        fan_in = c_in * k
        std = np.sqrt(2.0 / fan_in)
        store.add(
            f"conv{i}.w",
            (rng.standard_normal((cfg.conv_channels, c_in, k)) * std).astype(dtype),
        )
        store.add(f"conv{i}.b", np.zeros(cfg.conv_channels, dtype=dtype))
        c_in = cfg.conv_channels
    d_in = cfg.flat_dim
    for i, width in enumerate(cfg.fc_widths):
        std = np.sqrt(2.0 / d_in)
        store.add(f"fc{i}.w", (rng.standard_normal((d_in, width)) * std).astype(dtype))
        store.add(f"fc{i}.b", np.zeros(width, dtype=dtype))
        d_in = width
    return CnnModel(config=cfg, store=store, seed=seed)


def encode_batch(names: Sequence[str], vocab: Vocabulary, window: int) -> np.ndarray:
    """Encode names into a [B, window] int index matrix."""
    out = np.empty((len(names), window), dtype=np.int64)
    for i, name in enumerate(names):
        out[i] = encode_chars(name, vocab, window).indices
    return out


def forward(
    m: CnnModel,
    batch: np.ndarray,
    train_mode: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list]:
    """Run the full stack on a [B, window] index batch; returns (logits,
    caches). Dropout is active only in train mode."""
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise CnnError("batch must be a non-empty [B, window] index array")
    if batch.shape[1] != m.config.window:
        raise CnnError(f"batch window {batch.shape[1]} != config window {m.config.window}")
    if train_mode and m.config.dropout_p > 0 and dropout_rng is None:
        raise CnnError("train mode requires a dropout RNG")
    store = m.store
    caches: list = [("indices", batch)]
    h = numkit.embedding_forward(batch, store["embed.table"])
    for i in range(len(m.config.kernel_sizes)):
        h, cache = numkit.conv1d_forward(h, store[f"conv{i}.w"], store[f"conv{i}.b"])
        caches.append((f"conv{i}", cache))
        relu_cache = (h,)
        h = np.maximum(h, 0.0)
        caches.append((f"relu_conv{i}", relu_cache))
        if i in m.config.pool_layers:
            h, cache = numkit.maxpool1d_forward(h, m.config.pool_size)
            caches.append((f"pool{i}", cache))
    b_sz = h.shape[0]
    conv_shape = h.shape
    h = h.reshape(b_sz, -1)
    caches.append(("flatten", conv_shape))
    for i in range(len(m.config.fc_widths)):
        h, cache = numkit.dense_forward(h, store[f"fc{i}.w"], store[f"fc{i}.b"])
        caches.append((f"fc{i}", cache))
        if i < len(m.config.fc_widths) - 1:
            relu_cache = (h,)
            h = np.maximum(h, 0.0)
            caches.append((f"relu_fc{i}", relu_cache))
            h, cache = numkit.dropout_forward(h, m.config.dropout_p, dropout_rng, train_mode)
            caches.append((f"dropout{i}", cache))
    return h, caches


def backward(m: CnnModel, dlogits: np.ndarray, caches: list) -> None:
    """Backpropagate through the cache trail, accumulating into the store."""
    store = m.store
    grad = dlogits
    for tag, cache in reversed(caches):
        if tag.startswith("dropout"):
            grad = numkit.dropout_backward(grad, cache)
        elif tag.startswith("relu"):
            grad = numkit.relu_backward(grad, cache)
        elif tag.startswith("fc"):
            grad, dw, db = numkit.dense_backward(grad, cache)
            store.accumulate_grad(f"{tag}.w", dw)
            store.accumulate_grad(f"{tag}.b", db)
        elif tag == "flatten":
            grad = grad.reshape(cache)
        elif tag.startswith("pool"):
            grad = numkit.maxpool1d_backward(grad, cache)
        elif tag.startswith("conv"):
            grad, dw, db = numkit.conv1d_backward(grad, cache)
            store.accumulate_grad(f"{tag}.w", dw)
            store.accumulate_grad(f"{tag}.b", db)
        elif tag == "indices":
            dtable = numkit.embedding_backward(grad, cache, store["embed.table"].shape)
            store.accumulate_grad("embed.table", dtable)
        else:
            raise CnnError(f"unknown cache tag {tag!r}")


def train(
    m: CnnModel,
    train_corpus: Corpus,
    vocab: Vocabulary,
    epochs: int = 10,
    lr: float = 1e-3,
    batch_size: int = 64,
    seed: int = 0,
) -> list[float]:
    """Train in place with Adam on softmax cross-entropy; per-epoch data
    order and dropout masks come from one seeded RNG. Returns the per-epoch
    mean batch loss."""
    labels = train_corpus.labels()
    if any(lab is Label.UNLABELED for lab in labels):
        raise CnnError("training corpus must not contain Unlabeled records")
    y = np.array([CLASS_INDEX[lab.value] for lab in labels], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise CnnError("training corpus must contain both classes")
    X = encode_batch(train_corpus.names(), vocab, m.config.window)
    rng = np.random.default_rng(seed)
    n = len(y)
    loss_log: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            logits, caches = forward(m, X[idx], train_mode=True, dropout_rng=rng)
            loss, dlogits = numkit.softmax_xent(logits, y[idx])
            if not np.isfinite(loss):
                raise CnnError(f"non-finite loss at epoch {epoch}, batch offset {start}")
            backward(m, dlogits.astype(logits.dtype), caches)
            numkit.adam_step(m.store, lr)
            batch_losses.append(loss)
        loss_log.append(float(np.mean(batch_losses)))
    return loss_log


def _fc_stack_infer(m: CnnModel, flat: np.ndarray, upto_embedding: bool) -> np.ndarray:
    store = m.store
    h = flat
    n_fc = len(m.config.fc_widths)
    for i in range(n_fc):
        h = h @ store[f"fc{i}.w"] + store[f"fc{i}.b"]
        if i < n_fc - 1:
            h = np.maximum(h, 0.0)
            if upto_embedding and i == n_fc - 2:
                return h
    return h


def _conv_stack_infer(m: CnnModel, batch: np.ndarray) -> np.ndarray:
    store = m.store
    h = numkit.embedding_forward(batch, store["embed.table"])
    for i in range(len(m.config.kernel_sizes)):
        h, _ = numkit.conv1d_forward(h, store[f"conv{i}.w"], store[f"conv{i}.b"])
        h = np.maximum(h, 0.0)
        if i in m.config.pool_layers:
            h, _ = numkit.maxpool1d_forward(h, m.config.pool_size)
    return h.reshape(h.shape[0], -1)


def embed_batch(m: CnnModel, names: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Post-ReLU activations of the penultimate dense layer, [B, fc_width]."""
    batch = encode_batch(names, vocab, m.config.window)
    flat = _conv_stack_infer(m, batch)
    out = _fc_stack_infer(m, flat, upto_embedding=True)
    numkit.check_finite("embedding", out)
    return out


def embed(m: CnnModel, name: str, vocab: Vocabulary) -> np.ndarray:
    return embed_batch(m, [name], vocab)[0]


def predict_proba_batch(m: CnnModel, names: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """P(malicious) per name (softmax index 1)."""
    batch = encode_batch(names, vocab, m.config.window)
    flat = _conv_stack_infer(m, batch)
    logits = _fc_stack_infer(m, flat, upto_embedding=False)
    numkit.check_finite("logits", logits)
    return numkit.softmax_probs(logits)[:, CLASS_INDEX["malicious"]]


def predict_proba(m: CnnModel, name: str, vocab: Vocabulary) -> float:
    return float(predict_proba_batch(m, [name], vocab)[0])


# --------------------------------------------------------------------------
# Model file I/O
# --------------------------------------------------------------------------


def save_cnn_model(m: CnnModel, vocab: Vocabulary, path: str | Path) -> None:
    """JSON manifest: config, vocabulary (with content hash), class-index
    convention, and tensor payloads."""
    doc = {
        "kind": "charcnn",
        "config": m.config.to_json_dict(),
        "vocab_sha256": vocab.content_hash(),
        "vocab": vocab.to_json_dict(),
        "class_index": CLASS_INDEX,
        "seed": m.seed,
        "state": m.store.state_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_cnn_model(path: str | Path) -> tuple[CnnModel, Vocabulary]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "charcnn":
        raise CnnError(f"not a charcnn model file: {path}")
    vocab = Vocabulary.from_json_dict(doc["vocab"])
    if vocab.content_hash() != doc["vocab_sha256"]:
        raise CnnError("embedded vocabulary does not match its recorded content hash")
    if doc["class_index"] != CLASS_INDEX:
        raise CnnError(f"unsupported class-index convention: {doc['class_index']}")
    model = CnnModel(
        config=CnnConfig.from_json_dict(doc["config"]),
        store=ParamStore.from_state_dict(doc["state"]),
        seed=int(doc.get("seed", 0)),
    )
    return model, vocab
