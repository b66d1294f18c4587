"""Character vocabularies, index-sequence encoding for the CNN, and binary
character 3-gram vectorization for the linear model.

Both lookup structures are built from training-split corpora only and are
immutable afterwards; encoding and vectorization are pure functions.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus, SplitTag

__all__ = [
    "FeatureError",
    "Vocabulary",
    "TokenSeq",
    "NgramIndex",
    "SparseVec",
    "build_vocabulary",
    "encode_chars",
    "build_ngram_index",
    "vectorize_ngrams",
    "matrix_sparsity",
]

PAD_INDEX = 0


class FeatureError(ValueError):
    pass


def _require_train_split(c: Corpus, what: str) -> None:
    if c.split_tag is not SplitTag.TRAIN:
        raise FeatureError(
            f"{what} must be built from a Train-tagged corpus, got {c.split_tag.value}"
        )


@dataclass(frozen=True)
class Vocabulary:
    """Maps the most frequent training characters to dense indices in
    [1, v_size]; index 0 is reserved for padding."""

    char_to_index: dict[str, int]
    v_size: int

    def to_json_dict(self) -> dict:
        return {
            "v_size": self.v_size,
            "entries": sorted(self.char_to_index.items(), key=lambda kv: kv[1]),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Vocabulary":
        return cls(char_to_index={c: int(i) for c, i in obj["entries"]}, v_size=int(obj["v_size"]))

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TokenSeq:
    """Fixed-length index sequence; positions >= effective_len are padding."""

    indices: tuple[int, ...]
    effective_len: int


@dataclass(frozen=True)
class NgramIndex:
    """Maps each training n-gram to a dense column id, in first-appearance
    order over the raw (unfiltered) training names."""

    gram_to_column: dict[str, int]
    n: int = 3

    @property
    def dim(self) -> int:
        return len(self.gram_to_column)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "entries": sorted(self.gram_to_column.items(), key=lambda kv: kv[1]),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "NgramIndex":
        return cls(gram_to_column={g: int(i) for g, i in obj["entries"]}, n=int(obj["n"]))

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SparseVec:
    """Binary presence vector: strictly increasing active column ids."""

    active_columns: tuple[int, ...]

    def __post_init__(self):
        cols = self.active_columns
        if any(cols[i] >= cols[i + 1] for i in range(len(cols) - 1)):
            raise FeatureError("active columns must be strictly increasing")


def build_vocabulary(train: Corpus, v_size: int) -> Vocabulary:
    """Rank training characters by frequency (ties broken by ascending code
    point) and keep the top `v_size`."""
    if v_size < 1:
        raise FeatureError("v_size must be >= 1")
    _require_train_split(train, "Vocabulary")
    if len(train) == 0:
        raise FeatureError("training corpus is empty")
    counts: Counter = Counter()
    for record in train:
        counts.update(record.name)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[:v_size]
    return Vocabulary(
        char_to_index={ch: i + 1 for i, (ch, _) in enumerate(kept)},
        v_size=v_size,
    )


def encode_chars(name: str, v: Vocabulary, window: int) -> TokenSeq:
    """Map a name to vocabulary indices: out-of-vocabulary characters are
    dropped (they consume no window positions), then the sequence is
    truncated to `window` and right-padded with the pad index."""
    if window < 1:
        raise FeatureError("window must be >= 1")
    idx = [v.char_to_index[ch] for ch in name if ch in v.char_to_index]
    idx = idx[:window]
    effective = len(idx)
    idx.extend([PAD_INDEX] * (window - effective))
    return TokenSeq(indices=tuple(idx), effective_len=effective)


def _grams(name: str, n: int) -> list[str]:
    return [name[i : i + n] for i in range(len(name) - n + 1)]


def build_ngram_index(train: Corpus, n: int = 3) -> NgramIndex:
    """Assign a column to every contiguous n-gram over the raw code points of
    each training name, in first-appearance order."""
    if n < 1:
        raise FeatureError("n must be >= 1")
    _require_train_split(train, "NgramIndex")
    gram_to_column: dict[str, int] = {}
    for record in train:
        for gram in _grams(record.name, n):
            if gram not in gram_to_column:
                gram_to_column[gram] = len(gram_to_column)
    return NgramIndex(gram_to_column=gram_to_column, n=n)


def vectorize_ngrams(name: str, idx: NgramIndex) -> SparseVec:
    """Binary presence vector over known grams; unknown grams are ignored and
    names shorter than n yield the empty vector."""
    cols = {idx.gram_to_column[g] for g in _grams(name, idx.n) if g in idx.gram_to_column}
    return SparseVec(active_columns=tuple(sorted(cols)))


def matrix_sparsity(rows: Sequence[SparseVec], dim: int) -> float:
    """Fraction of zero entries in the implied rows x dim binary matrix."""
    if dim < 1:
        raise FeatureError("dim must be >= 1")
    if len(rows) == 0:
        raise FeatureError("sparsity of an empty matrix is undefined")
    active = sum(len(r.active_columns) for r in rows)
    return 1.0 - active / (len(rows) * dim)
