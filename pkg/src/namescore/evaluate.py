"""Classification metrics, ROC/AUC, and the exact-name lookup baseline.

All functions are pure over immutable inputs. Scores are P(malicious) in
[0, 1]; labels may be given as :class:`~namescore.corpus.Label` values or as
ints (0 = benign, 1 = malicious).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import IO, Sequence

import numpy as np

from .corpus import Corpus, Label

__all__ = [
    "EvalError",
    "ClassMetrics",
    "EvalReport",
    "RocCurve",
    "LookupModel",
    "LookupResult",
    "LookupReport",
    "classification_report",
    "roc_auc",
    "roc_to_csv",
    "lookup_train",
    "lookup_predict",
    "lookup_report",
]


class EvalError(ValueError):
    pass


def _as_binary(labels: Sequence) -> np.ndarray:
    """Coerce labels to a {0, 1} int array (1 = malicious)."""
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if isinstance(lab, Label):
            if lab is Label.UNLABELED:
                raise EvalError("cannot evaluate against an Unlabeled record")
            out[i] = 1 if lab is Label.MALICIOUS else 0
        else:
            val = int(lab)
            if val not in (0, 1):
                raise EvalError(f"labels must be 0 or 1, got {val}")
            out[i] = val
    return out


def _prf(tp: int, predicted: int, actual: int) -> tuple[float, float, float]:
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    """Per-class precision/recall/F1 with both average conventions and the
    2x2 confusion matrix (rows = true class, columns = predicted class,
    benign first)."""

    per_class: dict[str, ClassMetrics]
    macro_avg: ClassMetrics
    weighted_avg: ClassMetrics
    confusion: tuple[tuple[int, int], tuple[int, int]]
    threshold: float

    def to_json_dict(self) -> dict:
        def row(m: ClassMetrics) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }

        return {
            "threshold": self.threshold,
            "benign": row(self.per_class["benign"]),
            "malicious": row(self.per_class["malicious"]),
            "macro_avg": row(self.macro_avg),
            "weighted_avg": row(self.weighted_avg),
            "confusion": [list(r) for r in self.confusion],
        }


def classification_report(
    scores: Sequence[float], labels: Sequence, threshold: float = 0.5
) -> EvalReport:
    """Binarize scores at `threshold` (>= means malicious) and compute
    per-class metrics plus macro and support-weighted averages."""
    if len(scores) != len(labels) or len(scores) == 0:
        raise EvalError("scores and labels must be non-empty and equal-length")
    y = _as_binary(labels)
    pred = (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))

    n_benign = tn + fp
    n_malicious = tp + fn
    total = n_benign + n_malicious
    p_b, r_b, f_b = _prf(tn, tn + fn, n_benign)
    p_m, r_m, f_m = _prf(tp, tp + fp, n_malicious)
    per_class = {
        "benign": ClassMetrics(p_b, r_b, f_b, n_benign),
        "malicious": ClassMetrics(p_m, r_m, f_m, n_malicious),
    }
    macro = ClassMetrics((p_b + p_m) / 2, (r_b + r_m) / 2, (f_b + f_m) / 2, total)
    weighted = ClassMetrics(
        (p_b * n_benign + p_m * n_malicious) / total,
        (r_b * n_benign + r_m * n_malicious) / total,
        (f_b * n_benign + f_m * n_malicious) / total,
        total,
    )
    return EvalReport(
        per_class=per_class,
        macro_avg=macro,
        weighted_avg=weighted,
        confusion=((tn, fp), (fn, tp)),
        threshold=threshold,
    )


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by descending threshold, from (0,0) to (1,1).

    thresholds[i] is the score cut-off producing points[i]; the first entry
    is +inf (nothing predicted malicious)."""

    thresholds: tuple[float, ...]
    points: tuple[tuple[float, float], ...]
    auc: float


def roc_auc(scores: Sequence[float], labels: Sequence) -> RocCurve:
    """Threshold sweep over unique scores with tied scores grouped into one
    step; AUC by the trapezoidal rule (equals the pairwise ranking
    probability with ties counted 1/2)."""
    y = _as_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    if len(s) != len(y) or len(s) == 0:
        raise EvalError("scores and labels must be non-empty and equal-length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvalError("ROC requires both classes present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    thresholds = [math.inf]
    points = [(0.0, 0.0)]
    area2 = 0.0  # twice the area, accumulated exactly on integer counts
    tp = fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        d_tp = int(y_sorted[i:j].sum())
        d_fp = (j - i) - d_tp
        area2 += d_fp * (2 * tp + d_tp)
        tp += d_tp
        fp += d_fp
        thresholds.append(float(s_sorted[i]))
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = area2 / (2.0 * n_pos * n_neg)
    return RocCurve(thresholds=tuple(thresholds), points=tuple(points), auc=auc)


def roc_to_csv(curve: RocCurve, fh: IO[str]) -> None:
    """Emit `threshold,fpr,tpr` rows followed by an AUC footer comment."""
    writer = csv.writer(fh)
    writer.writerow(["threshold", "fpr", "tpr"])
    for thr, (fpr, tpr) in zip(curve.thresholds, curve.points):
        writer.writerow([repr(thr), repr(fpr), repr(tpr)])
    fh.write(f"# auc,{curve.auc!r}\n")


# --------------------------------------------------------------------------
# Naive exact-name lookup baseline
# --------------------------------------------------------------------------


class LookupResult(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    UNSEEN = "unseen"


_LOOKUP_FROM_LABEL = {Label.BENIGN: LookupResult.BENIGN, Label.MALICIOUS: LookupResult.MALICIOUS}


@dataclass(frozen=True)
class LookupModel:
    """Exact raw-name memorization of the training set (no normalization).

    Names seen with both labels resolve to the majority label; exact ties go
    to Malicious (the security-conservative choice), recorded in
    `collision_policy`."""

    name_to_label: dict[str, Label]
    n_collisions: int
    collision_policy: str = "majority, ties -> malicious"


def lookup_train(train: Corpus) -> LookupModel:
    counts: dict[str, Counter] = {}
    for rec in train:
        if rec.label is Label.UNLABELED:
            raise EvalError("lookup baseline requires a labeled corpus")
        counts.setdefault(rec.name, Counter())[rec.label] += 1
    mapping: dict[str, Label] = {}
    n_collisions = 0
    for name, c in counts.items():
        n_b = c.get(Label.BENIGN, 0)
        n_m = c.get(Label.MALICIOUS, 0)
        if n_b and n_m:
            n_collisions += 1
        mapping[name] = Label.MALICIOUS if n_m >= n_b else Label.BENIGN
    return LookupModel(name_to_label=mapping, n_collisions=n_collisions)


def lookup_predict(m: LookupModel, name: str) -> LookupResult:
    label = m.name_to_label.get(name)
    if label is None:
        return LookupResult.UNSEEN
    return _LOOKUP_FROM_LABEL[label]


@dataclass(frozen=True)
class LookupReport:
    """Confusion over predicted {benign, malicious, unseen} x true class.

    Precision is computed only over non-unseen predictions; recall counts
    unseen predictions as misses."""

    confusion: dict[str, dict[str, int]]  # true class -> predicted -> count
    per_class: dict[str, ClassMetrics]
    macro_avg: ClassMetrics
    weighted_avg: ClassMetrics

    def to_json_dict(self) -> dict:
        def row(m: ClassMetrics) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }

        return {
            "confusion": self.confusion,
            "benign": row(self.per_class["benign"]),
            "malicious": row(self.per_class["malicious"]),
            "macro_avg": row(self.macro_avg),
            "weighted_avg": row(self.weighted_avg),
        }


def lookup_report(m: LookupModel, test: Corpus) -> LookupReport:
    conf = {
        "benign": {"benign": 0, "malicious": 0, "unseen": 0},
        "malicious": {"benign": 0, "malicious": 0, "unseen": 0},
    }
    for rec in test:
        if rec.label is Label.UNLABELED:
            raise EvalError("lookup evaluation requires a labeled test corpus")
        pred = lookup_predict(m, rec.name)
        conf[rec.label.value][pred.value] += 1

    n_benign = sum(conf["benign"].values())
    n_malicious = sum(conf["malicious"].values())
    total = n_benign + n_malicious
    p_b, r_b, f_b = _prf(
        conf["benign"]["benign"],
        conf["benign"]["benign"] + conf["malicious"]["benign"],
        n_benign,
    )
    p_m, r_m, f_m = _prf(
        conf["malicious"]["malicious"],
        conf["malicious"]["malicious"] + conf["benign"]["malicious"],
        n_malicious,
    )
    per_class = {
        "benign": ClassMetrics(p_b, r_b, f_b, n_benign),
        "malicious": ClassMetrics(p_m, r_m, f_m, n_malicious),
    }
    macro = ClassMetrics((p_b + p_m) / 2, (r_b + r_m) / 2, (f_b + f_m) / 2, total)
    weighted = ClassMetrics(
        (p_b * n_benign + p_m * n_malicious) / total if total else 0.0,
        (r_b * n_benign + r_m * n_malicious) / total if total else 0.0,
        (f_b * n_benign + f_m * n_malicious) / total if total else 0.0,
        total,
    )
    return LookupReport(confusion=conf, per_class=per_class, macro_avg=macro, weighted_avg=weighted)
