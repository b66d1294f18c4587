"""Shared test helpers: finite-difference gradient oracle, corpus builders."""

import hashlib

import numpy as np
import pytest

from namescore.corpus import Corpus, Label, NameRecord, SplitTag


def numeric_grad(f, x, eps=1e-6):
    """Central-difference gradient of a scalar function with respect to x.

    `f` takes no arguments and must read the current contents of `x`; the
    array is perturbed in place and restored.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        f_plus = f()
        flat_x[i] = orig - eps
        f_minus = f()
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def rel_error(a, b):
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-300)
    return np.linalg.norm((a - b).ravel()) / denom


def fake_sha(key) -> str:
    return hashlib.sha256(str(key).encode()).hexdigest()


def make_corpus(pairs, tag=SplitTag.UNSPLIT) -> Corpus:
    """Build a corpus from (name, label) pairs; labels may be Label values
    or ints 0/1/-1."""
    int_to_label = {0: Label.BENIGN, 1: Label.MALICIOUS, -1: Label.UNLABELED}
    records = []
    for i, (name, label) in enumerate(pairs):
        if not isinstance(label, Label):
            label = int_to_label[label]
        records.append(NameRecord(fake_sha(i), name, label))
    return Corpus(tuple(records), tag)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
