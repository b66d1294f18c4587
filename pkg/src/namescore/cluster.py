"""Density clustering of name embeddings, homogeneity scoring, per-cluster
composition statistics, and a 2-D projection for plot emission.

Clustering is classic density-reachability (DBSCAN) under Euclidean
distance with noise labeled -1; expansion proceeds in row order, so results
are deterministic for a fixed embedding matrix.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, deque
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .corpus import Label

__all__ = [
    "ClusterError",
    "EmbeddingSet",
    "ClusterAssignment",
    "ClusterStats",
    "HomogeneityReport",
    "cluster_density",
    "homogeneity",
    "cluster_stats",
    "project_2d",
    "write_assignments_csv",
    "write_stats_csv",
    "write_projection_csv",
]

NOISE = -1


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingSet:
    """Row-aligned embeddings and record references."""

    matrix: np.ndarray  # [N, D]
    sha256s: tuple[str, ...]
    names: tuple[str, ...]
    labels: tuple[Label, ...]

    def __post_init__(self):
        n = self.matrix.shape[0]
        if not (len(self.sha256s) == len(self.names) == len(self.labels) == n):
            raise ClusterError("embedding rows and record references must align")
        if not np.all(np.isfinite(self.matrix)):
            raise ClusterError("embeddings must be finite")

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # per-row cluster id, -1 = noise
    n_clusters: int
    eps: float
    min_pts: int

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == NOISE))


def cluster_density(E: EmbeddingSet, eps: float, min_pts: int) -> ClusterAssignment:
    """DBSCAN with Euclidean distance.

    A point is core when its eps-ball (itself included) holds at least
    min_pts points; non-core points reachable from a core point join its
    cluster, everything else is noise.
    """
    if len(E) == 0:
        raise ClusterError("cannot cluster an empty embedding set")
    if eps <= 0:
        raise ClusterError("eps must be positive")
    if min_pts < 2:
        raise ClusterError("min_pts must be >= 2")

    X = E.matrix.astype(np.float64, copy=False)
    n = X.shape[0]
    sq_norms = np.einsum("ij,ij->i", X, X)
    eps2 = eps * eps

    def region(i: int) -> np.ndarray:
        d2 = sq_norms + sq_norms[i] - 2.0 * (X @ X[i])
        return np.nonzero(d2 <= eps2)[0]

    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    cid = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        neighbors = region(i)
        if len(neighbors) < min_pts:
            continue  # stays noise unless later claimed as a border point
        labels[i] = cid
        queue = deque(int(j) for j in neighbors if j != i)
        while queue:
            j = queue.popleft()
            if not visited[j]:
                visited[j] = True
                nb = region(j)
                if len(nb) >= min_pts:
                    queue.extend(int(q) for q in nb if not visited[q] or labels[q] == NOISE)
            if labels[j] == NOISE:
                labels[j] = cid
        cid += 1
    return ClusterAssignment(labels=labels, n_clusters=cid, eps=eps, min_pts=min_pts)


@dataclass(frozen=True)
class HomogeneityReport:
    h: float
    class_entropy: float
    conditional_entropy: float
    noise_excluded: bool


def _entropy(counts: Counter) -> float:
    total = sum(counts.values())
    ent = 0.0
    for c in counts.values():
        if c > 0:
            p = c / total
            ent -= p * math.log(p)
    return ent


def homogeneity(
    a: ClusterAssignment, labels: Sequence, exclude_noise: bool = True
) -> HomogeneityReport:
    """h = 1 - H(C|K) / H(C) over (optionally noise-excluded) points, with
    natural logs and the 0*log(0) := 0 convention; h = 1 when H(C) = 0.

    With exclude_noise=False, all noise points form one extra cluster.
    """
    if len(labels) != len(a.labels):
        raise ClusterError("class labels must align with the assignment")
    pairs = [
        (int(k), lab)
        for k, lab in zip(a.labels, labels)
        if not (exclude_noise and k == NOISE)
    ]
    if not pairs:
        raise ClusterError("all points are noise; nothing to score")

    class_counts: Counter = Counter(lab for _, lab in pairs)
    h_c = _entropy(class_counts)
    by_cluster: dict[int, Counter] = {}
    for k, lab in pairs:
        by_cluster.setdefault(k, Counter())[lab] += 1
    total = len(pairs)
    h_c_given_k = sum((sum(c.values()) / total) * _entropy(c) for c in by_cluster.values())
    h = 1.0 if h_c == 0.0 else 1.0 - h_c_given_k / h_c
    return HomogeneityReport(
        h=h, class_entropy=h_c, conditional_entropy=h_c_given_k, noise_excluded=exclude_noise
    )


@dataclass(frozen=True)
class ClusterStats:
    cluster_id: int
    size: int
    malicious_fraction: float
    top_name_proportion: float


def cluster_stats(a: ClusterAssignment, E: EmbeddingSet) -> list[ClusterStats]:
    """Per-cluster size, malware fraction, and the share of the most common
    name; noise points are excluded."""
    if len(E) != len(a.labels):
        raise ClusterError("embedding set must align with the assignment")
    out: list[ClusterStats] = []
    for cid in range(a.n_clusters):
        rows = np.nonzero(a.labels == cid)[0]
        size = len(rows)
        n_mal = sum(1 for i in rows if E.labels[i] is Label.MALICIOUS)
        top = Counter(E.names[i] for i in rows).most_common(1)[0][1]
        out.append(
            ClusterStats(
                cluster_id=cid,
                size=size,
                malicious_fraction=n_mal / size,
                top_name_proportion=top / size,
            )
        )
    return out


def _power_iteration(
    A: np.ndarray, rng: np.random.Generator, ortho_to: list[np.ndarray], max_iter: int = 10000
) -> np.ndarray:
    """Leading eigenvector of symmetric PSD A, deflated against `ortho_to`."""
    v = rng.standard_normal(A.shape[0])
    for u in ortho_to:
        v -= (v @ u) * u
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ClusterError("degenerate start vector")
    v /= norm
    for _ in range(max_iter):
        w = A @ v
        for u in ortho_to:
            w -= (w @ u) * u
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            # Deflated operator is (numerically) zero: any orthogonal unit
            # vector is a valid direction of zero variance.
            return v
        w /= norm
        if np.linalg.norm(w - v) < 1e-13 or np.linalg.norm(w + v) < 1e-13:
            return w
        v = w
    return v


def project_2d(E: EmbeddingSet, seed: int = 0) -> np.ndarray:
    """Top-2 principal components via power iteration, [N, 2] coordinates.

    Uses the covariance when D <= N, otherwise the mean-centered Gram
    matrix. Deterministic for a fixed seed."""
    n, d = E.matrix.shape
    if n < 2:
        raise ClusterError("projection requires at least 2 rows")
    X = E.matrix.astype(np.float64) - E.matrix.mean(axis=0, dtype=np.float64)
    total_var = float(np.einsum("ij,ij->", X, X)) / n
    if total_var <= 0.0:
        raise ClusterError("zero-variance data cannot be projected")
    rng = np.random.default_rng(seed)

    components: list[np.ndarray] = []
    if d <= n:
        cov = (X.T @ X) / n
        basis: list[np.ndarray] = []
        for _ in range(2):
            v = _power_iteration(cov, rng, basis)
            basis.append(v)
        components = basis
    else:
        gram = (X @ X.T) / n
        basis = []
        for _ in range(2):
            u = _power_iteration(gram, rng, basis)
            basis.append(u)
        for u in basis:
            c = X.T @ u
            norm = np.linalg.norm(c)
            if norm < 1e-300:
                # Zero-variance direction; fall back to a deterministic unit
                # vector orthogonal to what we have.
                c = rng.standard_normal(d)
                for prev in components:
                    c -= (c @ prev) * prev
                norm = np.linalg.norm(c)
            components.append(c / norm)
    # Deterministic sign: make the largest-magnitude loading positive.
    fixed = []
    for c in components:
        j = int(np.argmax(np.abs(c)))
        fixed.append(-c if c[j] < 0 else c)
    return np.stack([X @ c for c in fixed], axis=1)


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------


def write_assignments_csv(E: EmbeddingSet, a: ClusterAssignment, fh: IO[str]) -> None:
    writer = csv.writer(fh)
    writer.writerow(["sha256", "name", "label", "cluster"])
    for i in range(len(E)):
        writer.writerow([E.sha256s[i], E.names[i], E.labels[i].value, int(a.labels[i])])


def write_stats_csv(stats: Sequence[ClusterStats], fh: IO[str]) -> None:
    writer = csv.writer(fh)
    writer.writerow(["cluster", "size", "malicious_fraction", "top_name_proportion"])
    for s in stats:
        writer.writerow([s.cluster_id, s.size, repr(s.malicious_fraction), repr(s.top_name_proportion)])


def write_projection_csv(E: EmbeddingSet, coords: np.ndarray, fh: IO[str]) -> None:
    writer = csv.writer(fh)
    writer.writerow(["sha256", "x", "y", "label"])
    for i in range(len(E)):
        writer.writerow([E.sha256s[i], repr(float(coords[i, 0])), repr(float(coords[i, 1])), E.labels[i].value])
