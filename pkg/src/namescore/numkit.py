"""Minimal differentiable numeric core: the layer forward/backward kernels
needed by the character CNN and the fusion MLP, cross-entropy loss, and the
Adam optimizer.

Tensors are plain numpy arrays (row-major). Every kernel is a pure function
of its inputs; forward passes return a cache that the matching backward pass
consumes. Default precision is float32; gradient checking runs in float64.
"""

from __future__ import annotations

import base64

import numpy as np

__all__ = [
    "NumkitError",
    "ParamStore",
    "adam_step",
    "tensor_to_payload",
    "tensor_from_payload",
    "check_finite",
    "embedding_forward",
    "embedding_backward",
    "conv1d_forward",
    "conv1d_backward",
    "maxpool1d_forward",
    "maxpool1d_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "dropout_forward",
    "dropout_backward",
    "batchnorm1d_forward",
    "batchnorm1d_backward",
    "softmax_xent",
]


class NumkitError(ValueError):
    pass


def check_finite(context: str, *arrays: np.ndarray) -> None:
    """NaN/Inf anywhere is a hard failure; raise with a diagnostic."""
    for a in arrays:
        if not np.all(np.isfinite(a)):
            bad = int(np.size(a) - np.count_nonzero(np.isfinite(a)))
            raise NumkitError(f"{context}: {bad} non-finite entries in array of shape {a.shape}")


# --------------------------------------------------------------------------
# Tensor serialization: JSON header + base64 little-endian payload
# --------------------------------------------------------------------------

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def tensor_to_payload(arr: np.ndarray) -> dict:
    name = arr.dtype.name
    if name not in _DTYPES:
        raise NumkitError(f"unsupported dtype {name}")
    le = np.ascontiguousarray(arr, dtype=_DTYPES[name])
    return {
        "shape": list(arr.shape),
        "dtype": name,
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def tensor_from_payload(obj: dict) -> np.ndarray:
    name = obj["dtype"]
    if name not in _DTYPES:
        raise NumkitError(f"unsupported dtype {name}")
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=_DTYPES[name]).astype(name, copy=True)
    return arr.reshape(obj["shape"])


# --------------------------------------------------------------------------
# Parameter store + Adam
# --------------------------------------------------------------------------


class ParamStore:
    """Named parameters with their gradients and Adam state.

    Parameters keep insertion order; the optimizer walks them in that order,
    which keeps updates bit-reproducible. Buffers (e.g. batchnorm running
    statistics) are stored alongside but never receive gradients.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise NumkitError(f"duplicate name {name!r}")
        self.params[name] = value
        return value

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise NumkitError(f"duplicate name {name!r}")
        self.buffers[name] = value
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.params:
            return self.params[name]
        return self.buffers[name]

    def accumulate_grad(self, name: str, grad: np.ndarray) -> None:
        param = self.params[name]
        if param.shape != grad.shape:
            raise NumkitError(
                f"gradient shape {grad.shape} != parameter shape {param.shape} for {name!r}"
            )
        if name in self.grads:
            self.grads[name] += grad
        else:
            self.grads[name] = grad.astype(param.dtype, copy=True)

    def clear_grads(self) -> None:
        self.grads.clear()

    def state_dict(self) -> dict:
        return {
            "params": {k: tensor_to_payload(v) for k, v in self.params.items()},
            "buffers": {k: tensor_to_payload(v) for k, v in self.buffers.items()},
        }

    @classmethod
    def from_state_dict(cls, obj: dict) -> "ParamStore":
        store = cls()
        for k, v in obj["params"].items():
            store.add(k, tensor_from_payload(v))
        for k, v in obj.get("buffers", {}).items():
            store.add_buffer(k, tensor_from_payload(v))
        return store


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place; gradients are then cleared."""
    missing = [n for n in store.params if n not in store.grads]
    if missing:
        raise NumkitError(f"missing gradients for {missing}")
    store.step_count += 1
    t = store.step_count
    for name in store.params:
        g = store.grads[name]
        p = store.params[name]
        if name not in store._m:
            store._m[name] = np.zeros_like(p)
            store._v[name] = np.zeros_like(p)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.clear_grads()


# --------------------------------------------------------------------------
# Layer kernels
# --------------------------------------------------------------------------


def embedding_forward(indices: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Look up index sequences: output[b, :, w] = table[indices[b, w], :].

    indices: [B, W] ints in [0, rows); table: [rows, D]; output [B, D, W].
    """
    if indices.min() < 0 or indices.max() >= table.shape[0]:
        raise NumkitError(
            f"index out of range [0, {table.shape[0]}): "
            f"min {indices.min()}, max {indices.max()}"
        )
    return table[indices].transpose(0, 2, 1)


def embedding_backward(dout: np.ndarray, indices: np.ndarray, table_shape: tuple) -> np.ndarray:
    """Scatter-add upstream gradients [B, D, W] into the rows used."""
    dtable = np.zeros(table_shape, dtype=dout.dtype)
    flat = dout.transpose(0, 2, 1).reshape(-1, table_shape[1])
    np.add.at(dtable, indices.reshape(-1), flat)
    return dtable


def conv1d_forward(
    x: np.ndarray, kernel: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Zero-padded "same" 1-D convolution (cross-correlation convention).

    x: [B, Cin, L]; kernel: [Cout, Cin, K] with K odd; bias: [Cout].
    Output length equals input length.
    """
    b_sz, c_in, length = x.shape
    c_out, c_in2, k = kernel.shape
    if c_in != c_in2:
        raise NumkitError(f"channel mismatch: input {c_in}, kernel {c_in2}")
    if k % 2 == 0:
        raise NumkitError(f"kernel width must be odd for same padding, got {k}")
    pad = k // 2
    xp = np.zeros((b_sz, c_in, length + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + length] = x
    cols = np.empty((b_sz, c_in, k, length), dtype=x.dtype)
    for j in range(k):
        cols[:, :, j, :] = xp[:, :, j : j + length]
    cols2 = cols.reshape(b_sz, c_in * k, length)
    w2 = kernel.reshape(c_out, c_in * k)
    out = np.matmul(w2[None], cols2) + bias[None, :, None]
    return out, (x.shape, cols2, kernel)


def conv1d_backward(dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_shape, cols2, kernel = cache
    b_sz, c_in, length = x_shape
    c_out, _, k = kernel.shape
    pad = k // 2
    dbias = dout.sum(axis=(0, 2))
    # [B, Cout, L] x [B, L, Cin*K] summed over batch
    dw2 = np.matmul(dout, cols2.transpose(0, 2, 1)).sum(axis=0)
    dkernel = dw2.reshape(kernel.shape)
    w2 = kernel.reshape(c_out, c_in * k)
    dcols = np.matmul(w2.T[None], dout).reshape(b_sz, c_in, k, length)
    dxp = np.zeros((b_sz, c_in, length + 2 * pad), dtype=dout.dtype)
    for j in range(k):
        dxp[:, :, j : j + length] += dcols[:, :, j, :]
    dx = dxp[:, :, pad : pad + length]
    return dx, dkernel, dbias


def maxpool1d_forward(x: np.ndarray, pool: int) -> tuple[np.ndarray, tuple]:
    """Non-overlapping max pooling, stride = pool; the trailing remainder is
    dropped. Ties route to the first maximum."""
    b_sz, channels, length = x.shape
    if pool < 1:
        raise NumkitError("pool must be >= 1")
    if length < pool:
        raise NumkitError(f"input length {length} shorter than pool {pool}")
    l_out = length // pool
    windows = x[:, :, : l_out * pool].reshape(b_sz, channels, l_out, pool)
    arg = windows.argmax(axis=3)
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    return out, (x.shape, pool, arg)


def maxpool1d_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    x_shape, pool, arg = cache
    b_sz, channels, length = x_shape
    l_out = arg.shape[2]
    dwin = np.zeros((b_sz, channels, l_out, pool), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, : l_out * pool] = dwin.reshape(b_sz, channels, l_out * pool)
    return dx


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Affine layer: x [B, Din] @ w [Din, Dout] + b [Dout]."""
    return x @ w + b, (x, w)


def dense_backward(dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    return np.maximum(x, 0.0), (x,)


def relu_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    (x,) = cache
    return dout * (x > 0)


def dropout_forward(
    x: np.ndarray, p: float, rng: np.random.Generator, train: bool
) -> tuple[np.ndarray, tuple]:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
    Identity outside training mode."""
    if not 0.0 <= p < 1.0:
        raise NumkitError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, (None,)
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * keep, (keep,)


def dropout_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    (keep,) = cache
    if keep is None:
        return dout
    return dout * keep


def batchnorm1d_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> tuple[np.ndarray, tuple]:
    """Per-feature batch normalization with learned scale/shift.

    Training mode normalizes over the batch (biased variance) and updates
    the running statistics in place; inference mode uses the running stats.
    """
    if train:
        if x.shape[0] < 2:
            raise NumkitError("batchnorm in train mode requires batch >= 2")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    std = np.sqrt(var + eps)
    xhat = (x - mu) / std
    out = gamma * xhat + beta
    return out, (xhat, std, gamma, train)


def batchnorm1d_backward(
    dout: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    if not train:
        return dxhat / std, dgamma, dbeta
    n = dout.shape[0]
    dx = (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) / std
    return dx, dgamma, dbeta


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / B.
    """
    if logits.ndim != 2:
        raise NumkitError("logits must be [B, K]")
    b_sz = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(b_sz), labels].mean())
    dlogits = probs.copy()
    dlogits[np.arange(b_sz), labels] -= 1.0
    dlogits /= b_sz
    return loss, dlogits


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax (no loss); used at inference time."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)
