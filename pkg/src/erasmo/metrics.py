"""Internal clustering validity indices: silhouette, CHI, and DBI.

All distances are Euclidean. Inputs are any array-like or an object with a
.data array (EmbeddingMatrix); labels must cover 0..k-1 with no empty
cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QualityScores:
    silhouette: float
    chi: float
    dbi: float


def _as_points(X) -> np.ndarray:
    data = getattr(X, "data", X)
    points = np.asarray(data, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"expected 2-D data, got shape {points.shape}")
    return points


def _check_labels(labels, n: int) -> tuple[np.ndarray, int]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} points")
    k = int(labels.max()) + 1 if labels.size else 0
    if labels.min() < 0:
        raise ValueError("negative cluster label")
    counts = np.bincount(labels, minlength=k)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"cluster {empty} is empty")
    return labels, k


def silhouette_score(X, labels) -> float:
    """Mean of (b - a) / max(a, b); singleton-cluster points score 0."""
    points = _as_points(X)
    n = points.shape[0]
    labels, k = _check_labels(labels, n)
    if k < 2:
        raise ValueError("silhouette needs at least 2 clusters")

    diff = points[:, None, :] - points[None, :, :]
    distances = np.sqrt((diff * diff).sum(axis=2))
    counts = np.bincount(labels, minlength=k)

    # per-point mean distance to each cluster
    sums = np.zeros((n, k))
    for c in range(k):
        sums[:, c] = distances[:, labels == c].sum(axis=1)

    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if counts[own] == 1:
            continue
        a = sums[i, own] / (counts[own] - 1)
        other = [sums[i, c] / counts[c] for c in range(k) if c != own]
        b = min(other)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    value = float(scores.mean())
    assert -1.0 - 1e-12 <= value <= 1.0 + 1e-12
    return value


def calinski_harabasz(X, labels) -> float:
    """[Tr(B)/(k-1)] / [Tr(W)/(N-k)]; +inf when within-dispersion is zero."""
    points = _as_points(X)
    n = points.shape[0]
    labels, k = _check_labels(labels, n)
    if not 2 <= k < n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={n}")

    overall = points.mean(axis=0)
    between = []
    within = []
    for c in range(k):
        members = points[labels == c]
        centroid = members.mean(axis=0)
        between.append(members.shape[0] * float(((centroid - overall) ** 2).sum()))
        within.append(float(((members - centroid) ** 2).sum()))
    # fsum: exactly rounded, so relabeling clusters cannot shift the result
    trace_b = math.fsum(between)
    trace_w = math.fsum(within)
    if trace_w == 0.0:
        return float("inf")
    value = (trace_b / (k - 1)) / (trace_w / (n - k))
    assert value >= 0.0
    return value


def davies_bouldin(X, labels) -> float:
    """Mean over clusters of the worst (sigma_i + sigma_j) / d_ij ratio."""
    points = _as_points(X)
    n = points.shape[0]
    labels, k = _check_labels(labels, n)
    if k < 2:
        raise ValueError("DBI needs at least 2 clusters")

    centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
    sigma = np.array(
        [
            float(np.sqrt(((points[labels == c] - centroids[c]) ** 2).sum(axis=1)).mean())
            for c in range(k)
        ]
    )
    worst_ratios = []
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if j == i:
                continue
            d_ij = float(np.sqrt(((centroids[i] - centroids[j]) ** 2).sum()))
            if d_ij == 0.0:
                raise ValueError(f"clusters {i} and {j} have coincident centroids")
            worst = max(worst, (sigma[i] + sigma[j]) / d_ij)
        worst_ratios.append(worst)
    value = math.fsum(worst_ratios) / k
    assert value >= 0.0
    return value


def quality_scores(X, labels) -> QualityScores:
    return QualityScores(
        silhouette=silhouette_score(X, labels),
        chi=calinski_harabasz(X, labels),
        dbi=davies_bouldin(X, labels),
    )
