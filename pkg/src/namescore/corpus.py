"""Name-label corpus handling: ingestion, filtering, splitting, statistics,
and a synthetic corpus generator for desk-scale experiments.

A corpus is an ordered, immutable collection of (sha256, file name, label)
records. All operations are pure: they return new corpora and never mutate
their inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

__all__ = [
    "Label",
    "SplitTag",
    "NameRecord",
    "FilterPolicy",
    "Corpus",
    "CorpusStats",
    "IngestResult",
    "IngestError",
    "CorpusError",
    "SynthConfig",
    "ingest_jsonl",
    "ingest_csv",
    "select_primary_name",
    "apply_filter_policy",
    "drop_unlabeled",
    "compute_stats",
    "split_corpus",
    "generate_synthetic",
]

_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")


class CorpusError(ValueError):
    """Raised when a corpus operation's preconditions are violated."""


class IngestError(CorpusError):
    """Raised on malformed input during ingestion; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class Label(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    UNLABELED = "unlabeled"


class SplitTag(Enum):
    TRAIN = "train"
    TEST = "test"
    UNSPLIT = "unsplit"


_LABEL_FROM_INT = {0: Label.BENIGN, 1: Label.MALICIOUS, -1: Label.UNLABELED}
_LABEL_TO_INT = {v: k for k, v in _LABEL_FROM_INT.items()}


@dataclass(frozen=True)
class NameRecord:
    """One (hash, file name, label) observation."""

    sha256: str
    name: str
    label: Label

    def __post_init__(self):
        if not _SHA256_RE.match(self.sha256):
            raise CorpusError(f"invalid sha256: {self.sha256!r}")
        if not self.name:
            raise CorpusError("record name must be non-empty")


@dataclass(frozen=True)
class FilterPolicy:
    """Substring-based name filter used to prune leakage-prone records."""

    banned_substrings: tuple[str, ...] = ("vir", "mal", "hack")
    case_insensitive: bool = True

    def __post_init__(self):
        if any(not s for s in self.banned_substrings):
            raise CorpusError("banned substrings must be non-empty")

    def matches(self, name: str) -> bool:
        """True when `name` contains any banned substring."""
        if self.case_insensitive:
            # Unicode simple case folding; submission names mix cases.
            hay = name.casefold()
            return any(s.casefold() in hay for s in self.banned_substrings)
        return any(s in name for s in self.banned_substrings)


@dataclass(frozen=True)
class Corpus:
    records: tuple[NameRecord, ...]
    split_tag: SplitTag = SplitTag.UNSPLIT

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def retag(self, tag: SplitTag) -> "Corpus":
        return Corpus(self.records, tag)

    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def labels(self) -> list[Label]:
        return [r.label for r in self.records]

    def class_counts(self) -> dict[Label, int]:
        return dict(Counter(r.label for r in self.records))

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                obj = {
                    "sha256": r.sha256,
                    "name": r.name,
                    "label": _LABEL_TO_INT[r.label],
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class CorpusStats:
    """Per-class length histograms, character frequencies, and class counts."""

    length_histogram: dict[Label, dict[int, int]]
    char_frequency: dict[Label, dict[str, int]]
    class_counts: dict[Label, int]

    def to_json_dict(self) -> dict:
        def per_class(m):
            return {
                label.value: {str(k): v for k, v in sorted(m[label].items())}
                for label in sorted(m, key=lambda l: l.value)
            }

        return {
            "class_counts": {
                label.value: self.class_counts[label]
                for label in sorted(self.class_counts, key=lambda l: l.value)
            },
            "length_histogram": per_class(self.length_histogram),
            "char_frequency": per_class(self.char_frequency),
        }


@dataclass(frozen=True)
class IngestResult:
    """Corpus plus ingestion accounting; rejected counts stay auditable."""

    corpus: Corpus
    n_lines: int
    n_rejected_empty_name: int


def select_primary_name(names: Sequence[str]) -> str:
    """Pick the canonical name from a submission-name list: the first entry."""
    if not names:
        raise CorpusError("name list is empty")
    return names[0]


def _record_from_obj(obj: dict, line_no: int) -> NameRecord | None:
    """Build a record from a parsed JSON object; None when the name is empty."""
    if not isinstance(obj, dict):
        raise IngestError(line_no, "expected a JSON object")
    try:
        sha256 = str(obj["sha256"]).lower()
        raw_label = obj["label"]
    except KeyError as exc:
        raise IngestError(line_no, f"missing key {exc.args[0]!r}") from None
    if raw_label not in _LABEL_FROM_INT:
        raise IngestError(line_no, f"label must be 0, 1, or -1, got {raw_label!r}")
    # `names` (the plural submission field) wins over `name` when both exist.
    if "names" in obj:
        names = obj["names"]
        if not isinstance(names, list):
            raise IngestError(line_no, "`names` must be a list")
        name = select_primary_name(names) if names else ""
    elif "name" in obj:
        name = obj["name"]
    else:
        raise IngestError(line_no, "missing `name` or `names`")
    if not isinstance(name, str):
        raise IngestError(line_no, "name must be a string")
    if not name:
        return None
    try:
        return NameRecord(sha256, name, _LABEL_FROM_INT[raw_label])
    except CorpusError as exc:
        raise IngestError(line_no, str(exc)) from None


def ingest_jsonl(path: str | Path) -> IngestResult:
    """Read a JSONL corpus: one record per line with keys sha256, name (or
    names), and label in {0, 1, -1}.

    Empty-name records are rejected (not an error) and counted; malformed
    lines raise :class:`IngestError` with the offending line number.
    """
    records: list[NameRecord] = []
    n_lines = 0
    n_rejected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(line_no, f"invalid JSON: {exc.msg}") from None
            rec = _record_from_obj(obj, line_no)
            if rec is None:
                n_rejected += 1
            else:
                records.append(rec)
    return IngestResult(Corpus(tuple(records)), n_lines, n_rejected)


def ingest_csv(path: str | Path) -> IngestResult:
    """Read the alternate CSV form with header `sha256,name,label`."""
    records: list[NameRecord] = []
    n_lines = 0
    n_rejected = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"sha256", "name", "label"} <= set(reader.fieldnames):
            raise IngestError(1, "CSV header must contain sha256,name,label")
        for row in reader:
            line_no = reader.line_num
            n_lines += 1
            try:
                raw_label = int(row["label"])
            except (TypeError, ValueError):
                raise IngestError(line_no, f"label must be an integer, got {row['label']!r}") from None
            if raw_label not in _LABEL_FROM_INT:
                raise IngestError(line_no, f"label must be 0, 1, or -1, got {raw_label}")
            name = row["name"] or ""
            if not name:
                n_rejected += 1
                continue
            try:
                records.append(NameRecord(str(row["sha256"]).lower(), name, _LABEL_FROM_INT[raw_label]))
            except CorpusError as exc:
                raise IngestError(line_no, str(exc)) from None
    return IngestResult(Corpus(tuple(records)), n_lines, n_rejected)


def apply_filter_policy(c: Corpus, p: FilterPolicy) -> Corpus:
    """Drop records whose names contain a banned substring; order preserved.

    The removed count is the length difference with the input.
    """
    kept = tuple(r for r in c.records if not p.matches(r.name))
    return Corpus(kept, c.split_tag)


def drop_unlabeled(c: Corpus) -> Corpus:
    """Remove records with the Unlabeled label; order preserved."""
    kept = tuple(r for r in c.records if r.label is not Label.UNLABELED)
    return Corpus(kept, c.split_tag)


def compute_stats(c: Corpus) -> CorpusStats:
    """Per-class name-length histograms (unicode code points) and character
    frequencies, plus class counts."""
    if len(c) == 0:
        raise CorpusError("cannot compute stats of an empty corpus")
    length_hist: dict[Label, Counter] = {}
    char_freq: dict[Label, Counter] = {}
    counts: Counter = Counter()
    for r in c.records:
        counts[r.label] += 1
        length_hist.setdefault(r.label, Counter())[len(r.name)] += 1
        char_freq.setdefault(r.label, Counter()).update(r.name)
    return CorpusStats(
        length_histogram={k: dict(v) for k, v in length_hist.items()},
        char_frequency={k: dict(v) for k, v in char_freq.items()},
        class_counts=dict(counts),
    )


def split_corpus(c: Corpus, test_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Random train/test split; both halves keep the original record order."""
    if not 0.0 < test_fraction < 1.0:
        raise CorpusError("test_fraction must be in (0, 1)")
    rng = random.Random(seed)
    n = len(c)
    n_test = int(round(n * test_fraction))
    test_idx = set(rng.sample(range(n), n_test))
    train = tuple(r for i, r in enumerate(c.records) if i not in test_idx)
    test = tuple(r for i, r in enumerate(c.records) if i in test_idx)
    return Corpus(train, SplitTag.TRAIN), Corpus(test, SplitTag.TEST)


# --------------------------------------------------------------------------
# Synthetic corpus generation
# --------------------------------------------------------------------------

_WORDS = (
    "setup", "update", "install", "config", "report", "backup", "viewer",
    "launcher", "helper", "manager", "service", "driver", "monitor", "editor",
    "player", "reader", "writer", "client", "server", "agent", "tool",
    "utility", "system", "network", "printer", "audio", "video", "photo",
    "document", "sheet", "slide", "note", "mail", "chat", "browser", "search",
    "index", "cache", "temp", "data", "settings", "profile", "account",
    "license", "patch", "runtime", "engine", "core", "shell", "panel",
)

_BENIGN_EXTS = (".dll", ".exe", ".sys", ".ini", ".pdf", ".doc", ".txt", ".msi")
_MALICIOUS_EXTS = (".exe", ".dll", ".scr", ".bin", ".tmp")

#: Family name -> class it generates; selectable via SynthConfig.
PATTERN_FAMILIES = {
    "dict_ext": Label.BENIGN,
    "dict_pair": Label.BENIGN,
    "dict_version": Label.BENIGN,
    "hex_stem": Label.MALICIOUS,
    "random_stem": Label.MALICIOUS,
    "stem_suffix": Label.MALICIOUS,
}


@dataclass(frozen=True)
class SynthConfig:
    n_benign: int = 1000
    n_malicious: int = 1000
    pattern_families: tuple[str, ...] = tuple(PATTERN_FAMILIES)
    seed: int = 0

    def __post_init__(self):
        if self.n_benign < 0 or self.n_malicious < 0:
            raise CorpusError("record counts must be non-negative")
        unknown = [f for f in self.pattern_families if f not in PATTERN_FAMILIES]
        if unknown:
            raise CorpusError(f"unknown pattern families: {unknown}")


def _geometric_extra(rng: random.Random, p: float = 0.35, cap: int = 40) -> int:
    """Geometric tail so name lengths decay exponentially."""
    extra = 0
    while extra < cap and rng.random() > p:
        extra += 1
    return extra


def _gen_name(family: str, rng: random.Random) -> str:
    if family == "dict_ext":
        return rng.choice(_WORDS) + rng.choice(_BENIGN_EXTS)
    if family == "dict_pair":
        return rng.choice(_WORDS) + rng.choice(_WORDS) + rng.choice(_BENIGN_EXTS)
    if family == "dict_version":
        major = rng.randrange(1, 12)
        minor = rng.randrange(0, 10)
        return f"{rng.choice(_WORDS)}_{major}.{minor}{rng.choice(_BENIGN_EXTS)}"
    if family == "hex_stem":
        n = 8 + _geometric_extra(rng, p=0.12)
        stem = "".join(rng.choice("0123456789abcdef") for _ in range(n))
        return stem + rng.choice(_MALICIOUS_EXTS)
    if family == "random_stem":
        n = 5 + _geometric_extra(rng, p=0.25)
        stem = "".join(rng.choice("bcdfghjklmnpqrstvwxyz") for _ in range(n))
        return stem + rng.choice(_MALICIOUS_EXTS)
    if family == "stem_suffix":
        # Fixed tail, random prefix: mimics self-renaming droppers.
        n = 4 + _geometric_extra(rng, p=0.3)
        prefix = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(n))
        tail = rng.choice(("backup", "restore", "svchost", "winlogin"))
        return prefix + tail + ".exe"
    raise CorpusError(f"unknown family {family!r}")


def _synthetic_sha256(seed: int, index: int, name: str) -> str:
    payload = f"{seed}:{index}:{name}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def generate_synthetic(config: SynthConfig) -> Corpus:
    """Generate a deterministic labeled corpus from named pattern families.

    Benign names follow legible dictionary-word patterns; malicious names
    come from hex stems, random consonant stems, and fixed-tail families.
    Identical configs (seed included) produce byte-identical corpora.
    """
    rng = random.Random(config.seed)
    benign_fams = [f for f in config.pattern_families if PATTERN_FAMILIES[f] is Label.BENIGN]
    mal_fams = [f for f in config.pattern_families if PATTERN_FAMILIES[f] is Label.MALICIOUS]
    if config.n_benign > 0 and not benign_fams:
        raise CorpusError("no benign pattern family selected")
    if config.n_malicious > 0 and not mal_fams:
        raise CorpusError("no malicious pattern family selected")

    records: list[NameRecord] = []
    for i in range(config.n_benign):
        name = _gen_name(rng.choice(benign_fams), rng)
        records.append(NameRecord(_synthetic_sha256(config.seed, i, name), name, Label.BENIGN))
    for j in range(config.n_malicious):
        name = _gen_name(rng.choice(mal_fams), rng)
        idx = config.n_benign + j
        records.append(NameRecord(_synthetic_sha256(config.seed, idx, name), name, Label.MALICIOUS))
    return Corpus(tuple(records), SplitTag.UNSPLIT)
