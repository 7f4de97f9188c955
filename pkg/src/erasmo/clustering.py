"""Clustering algorithms with deterministic seeding and tie-breaking.

k-means (random or ++ init, multiple restarts), Ward agglomerative via the
Lance-Williams recurrence, fuzzy c-means, and spectral clustering on the
symmetric normalized Laplacian with a Jacobi eigensolver and discretize
label assignment. select_k sweeps a k range and picks the silhouette
argmax.

Ties anywhere resolve to the lowest index. Restart streams derive from the
base seed through SeedSequence spawning, so runs are reproducible and
restarts independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import silhouette_score

# documented bound for the dense Jacobi eigensolve
SPECTRAL_MAX_POINTS = 2000

ALGORITHM_KINDS = ("kmeans", "kmeans_pp", "ahc_ward", "fuzzy_cm", "spectral")

_DEFAULT_PARAMS = {
    "kmeans": {"init": "random", "n_init": 10, "seed": 0, "max_iter": 300, "tol": 1e-4},
    "kmeans_pp": {"init": "plusplus", "n_init": 1, "seed": 0, "max_iter": 300, "tol": 1e-4},
    "ahc_ward": {},
    "fuzzy_cm": {"m": 2.0, "error": 0.005, "maxiter": 1000, "seed": 0},
    "spectral": {"seed": 10, "gamma": None, "assign": "discretize"},
}


@dataclass
class ClusterAssignment:
    """Hard labels plus per-algorithm extras (centroids, memberships, SSE)."""

    labels: np.ndarray
    k: int
    centroids: np.ndarray | None = None
    memberships: np.ndarray | None = None
    inertia: float | None = None
    sse_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        counts = np.bincount(self.labels, minlength=self.k)
        if len(counts) > self.k or (counts == 0).any():
            raise ValueError(f"labels do not cover exactly {self.k} non-empty clusters")
        if self.memberships is not None:
            sums = self.memberships.sum(axis=1)
            if not np.allclose(sums, 1.0, atol=1e-9):
                raise ValueError("membership rows must sum to 1")


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ALGORITHM_KINDS:
            raise ValueError(f"unknown algorithm kind {self.kind!r}")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} params: {sorted(unknown)}")

    @classmethod
    def default(cls, kind: str) -> "AlgorithmSpec":
        return cls(kind=kind)

    def resolved(self) -> dict:
        merged = dict(_DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        return merged


def _as_points(X) -> np.ndarray:
    data = getattr(X, "data", X)
    points = np.asarray(data, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError(f"expected non-empty 2-D data, got shape {points.shape}")
    return points


def _check_k(k: int, n: int) -> None:
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")


def _sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=2)


def _sse(points, centers, labels) -> float:
    return float(((points - centers[labels]) ** 2).sum())


def _repair_empty(points, centers, labels, k):
    """Give each empty cluster the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        own_sq = ((points - centers[labels]) ** 2).sum(axis=1)
        donors = counts[labels] > 1
        own_sq[~donors] = -1.0
        farthest = int(own_sq.argmax())
        counts[labels[farthest]] -= 1
        labels[farthest] = empty
        counts[empty] = 1
        centers[empty] = points[farthest]
    return labels, centers


def _init_centers(points, k, init, rng):
    n = points.shape[0]
    if init == "random":
        picked = rng.choice(n, size=k, replace=False)
        return points[picked].copy()
    if init == "plusplus":
        centers = np.empty((k, points.shape[1]))
        centers[0] = points[rng.integers(n)]
        closest_sq = ((points - centers[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = closest_sq.sum()
            if total == 0.0:
                centers[c] = points[rng.integers(n)]
            else:
                probs = closest_sq / total
                centers[c] = points[rng.choice(n, p=probs)]
            closest_sq = np.minimum(closest_sq, ((points - centers[c]) ** 2).sum(axis=1))
        return centers
    raise ValueError(f"unknown init {init!r}")


def _lloyd(points, centers, max_iter, tol):
    k = centers.shape[0]
    labels = np.zeros(points.shape[0], dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        labels = _sq_distances(points, centers).argmin(axis=1)
        new_centers = centers.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
        labels, new_centers = _repair_empty(points, new_centers, labels, k)
        history.append(_sse(points, new_centers, labels))
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    labels = _sq_distances(points, centers).argmin(axis=1)
    labels, centers = _repair_empty(points, centers, labels, k)
    return labels, centers, history


def kmeans(
    X,
    k: int,
    init: str = "random",
    n_init: int = 10,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> ClusterAssignment:
    """Lloyd iterations, best of n_init seeded restarts by SSE."""
    points = _as_points(X)
    _check_k(k, points.shape[0])
    if np.unique(points, axis=0).shape[0] < k:
        raise ValueError(f"fewer than {k} distinct points")
    streams = np.random.SeedSequence(seed).spawn(n_init)
    best = None
    for stream in streams:
        rng = np.random.default_rng(stream)
        centers = _init_centers(points, k, init, rng)
        labels, centers, history = _lloyd(points, centers, max_iter, tol)
        sse = _sse(points, centers, labels)
        if best is None or sse < best[0]:
            best = (sse, labels, centers, history)
    sse, labels, centers, history = best
    return ClusterAssignment(
        labels=labels, k=k, centroids=centers, inertia=sse, sse_history=history
    )


# ---------------------------------------------------------------------------
# Ward agglomerative clustering


def _ward_cost(size_a, centroid_a, size_b, centroid_b) -> float:
    gap = centroid_a - centroid_b
    return size_a * size_b / (size_a + size_b) * float((gap * gap).sum())


def ahc_ward(X, k: int) -> ClusterAssignment:
    """Agglomerative merging by minimum Ward variance increase.

    Merge costs are maintained through the Lance-Williams recurrence; ties
    break on the smallest pair of cluster representatives (the minimum
    original row index in each cluster). Final labels are numbered by
    ascending representative.
    """
    points = _as_points(X)
    n = points.shape[0]
    _check_k(k, n)

    # merging always keeps the smaller id, so a cluster's id is the minimum
    # original row index of its members and doubles as its representative
    sizes = {i: 1 for i in range(n)}
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    active = set(range(n))

    # cost[(a, b)] with a < b holds 2 * Ward merge cost (squared form)
    diff = points[:, None, :] - points[None, :, :]
    sq = (diff * diff).sum(axis=2)
    cost = {(a, b): sq[a, b] for a in range(n) for b in range(a + 1, n)}

    while len(active) > k:
        best_pair = min(cost, key=lambda pair: (cost[pair], pair))
        a, b = best_pair
        merged_cost = cost.pop((a, b))
        new_size = sizes[a] + sizes[b]
        for other in active:
            if other in (a, b):
                continue
            key_a = (min(a, other), max(a, other))
            key_b = (min(b, other), max(b, other))
            d_ak = cost.pop(key_a)
            d_bk = cost.pop(key_b)
            n_k = sizes[other]
            updated = (
                (sizes[a] + n_k) * d_ak + (sizes[b] + n_k) * d_bk - n_k * merged_cost
            ) / (new_size + n_k)
            cost[key_a] = updated
        sizes[a] = new_size
        members[a].extend(members.pop(b))
        del sizes[b]
        active.remove(b)

    ordered = sorted(active)
    labels = np.zeros(n, dtype=np.int64)
    for label, cluster in enumerate(ordered):
        labels[members[cluster]] = label
    centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
    return ClusterAssignment(labels=labels, k=k, centroids=centroids)


# ---------------------------------------------------------------------------
# Fuzzy c-means


def fuzzy_memberships(points, centers, m: float) -> np.ndarray:
    """Membership update: inverse distance ratios to the power 2/(m-1).

    A point exactly on a centroid gets full membership there (lowest such
    index on ties).
    """
    sq = _sq_distances(points, centers)
    memberships = np.zeros_like(sq)
    zero_rows = (sq == 0.0).any(axis=1)
    for i in np.flatnonzero(zero_rows):
        memberships[i, int(sq[i].argmin())] = 1.0
    ok = ~zero_rows
    if ok.any():
        d = np.sqrt(sq[ok])
        power = 2.0 / (m - 1.0)
        ratio = (d[:, :, None] / d[:, None, :]) ** power
        memberships[ok] = 1.0 / ratio.sum(axis=2)
    return memberships


def _fuzzy_objective(points, centers, memberships, m) -> float:
    return float(((memberships ** m) * _sq_distances(points, centers)).sum())


def fuzzy_cmeans(
    X,
    k: int,
    m: float = 2.0,
    error: float = 0.005,
    maxiter: int = 1000,
    seed: int = 0,
    return_trace: bool = False,
):
    """Alternate centroid and membership updates from a random partition.

    Stops when the largest membership change drops below error. Hard
    labels are per-row argmax; an empty hard cluster steals its strongest
    supporter from a donor with more than one member.
    """
    points = _as_points(X)
    n = points.shape[0]
    _check_k(k, n)
    if m <= 1.0:
        raise ValueError("fuzziness m must exceed 1")

    rng = np.random.default_rng(seed)
    memberships = rng.random((n, k))
    memberships /= memberships.sum(axis=1, keepdims=True)

    trace_memberships = [memberships.copy()]
    trace_objective = []
    for _ in range(maxiter):
        weights = memberships ** m
        centers = (weights.T @ points) / weights.sum(axis=0)[:, None]
        updated = fuzzy_memberships(points, centers, m)
        trace_objective.append(_fuzzy_objective(points, centers, updated, m))
        change = float(np.abs(updated - memberships).max())
        memberships = updated
        trace_memberships.append(memberships.copy())
        if change < error:
            break

    labels = memberships.argmax(axis=1).astype(np.int64)
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        support = memberships[:, empty].copy()
        support[counts[labels] <= 1] = -1.0
        winner = int(support.argmax())
        counts[labels[winner]] -= 1
        labels[winner] = empty
        counts[empty] = 1
    assignment = ClusterAssignment(
        labels=labels,
        k=k,
        centroids=centers,
        memberships=memberships,
        inertia=trace_objective[-1],
    )
    if return_trace:
        return assignment, trace_memberships, trace_objective
    return assignment


# ---------------------------------------------------------------------------
# Spectral clustering


def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns eigenvalues in ascending order with matching eigenvector
    columns. Raises if the off-diagonal mass fails to fall below tol within
    max_sweeps sweeps.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V

    scale = max(1.0, float(np.abs(A).max()))
    converged = False
    for _ in range(max_sweeps + 1):
        off = math.sqrt(2.0 * float((np.triu(A, 1) ** 2).sum()))
        if off <= tol * scale:
            converged = True
            break
        threshold = off / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = A[:, p].copy()
                rot_q = A[:, q].copy()
                A[:, p] = c * rot_p - s * rot_q
                A[:, q] = s * rot_p + c * rot_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                vec_p = V[:, p].copy()
                vec_q = V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
    if not converged:
        raise RuntimeError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")

    eigenvalues = A.diagonal().copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], V[:, order]


def rbf_affinity(points: np.ndarray, gamma: float) -> np.ndarray:
    sq = _sq_distances(points, points)
    return np.exp(-gamma * sq)


def _discretize(U: np.ndarray, k: int, seed: int, stall_limit: int = 50):
    """Rotate the spectral embedding toward a partition-indicator matrix.

    Alternates argmax labeling with an SVD-based Procrustes rotation, Yu-Shi
    style. Returns None when the objective stalls for stall_limit
    iterations so the caller can fall back to k-means on the embedding.
    """
    rng = np.random.default_rng(seed)
    n = U.shape[0]
    norms = np.sqrt((U ** 2).sum(axis=1))
    norms[norms == 0.0] = 1.0
    vectors = U / norms[:, None]

    rotation = np.zeros((k, k))
    rotation[:, 0] = vectors[rng.integers(n)]
    accumulated = np.zeros(n)
    for j in range(1, k):
        accumulated += np.abs(vectors @ rotation[:, j - 1])
        rotation[:, j] = vectors[int(accumulated.argmin())]

    last_objective = None
    stalled = 0
    labels = None
    for _ in range(500):
        rotated = vectors @ rotation
        labels = rotated.argmax(axis=1)
        indicator = np.zeros((n, k))
        indicator[np.arange(n), labels] = 1.0
        left, singulars, right = np.linalg.svd(indicator.T @ vectors)
        objective = float(singulars.sum())
        if last_objective is not None and objective <= last_objective + 1e-12:
            stalled += 1
            if abs(objective - last_objective) < 1e-10:
                return labels
            if stalled >= stall_limit:
                return None
        else:
            stalled = 0
        last_objective = objective
        rotation = (left @ right).T
    return labels


def spectral(
    X,
    k: int,
    seed: int = 10,
    gamma: float | None = None,
    assign: str = "discretize",
) -> ClusterAssignment:
    """RBF affinity, symmetric normalized Laplacian, bottom-k eigenvectors.

    Labels come from discretize with a seeded initial rotation; if the
    rotation stalls or leaves an empty cluster, k-means on the embedding
    takes over.
    """
    points = _as_points(X)
    n = points.shape[0]
    _check_k(k, n)
    if n > SPECTRAL_MAX_POINTS:
        raise ValueError(f"dense eigensolve limited to {SPECTRAL_MAX_POINTS} points")
    if assign not in ("discretize", "kmeans"):
        raise ValueError(f"unknown assignment strategy {assign!r}")
    if gamma is None:
        gamma = 1.0 / points.shape[1]

    affinity = rbf_affinity(points, gamma)
    degrees = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    laplacian = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    eigenvalues, eigenvectors = jacobi_eigh(laplacian)
    U = eigenvectors[:, :k].copy()
    # deterministic sign: largest-magnitude entry of each eigenvector positive
    for j in range(k):
        pivot = int(np.abs(U[:, j]).argmax())
        if U[pivot, j] < 0:
            U[:, j] = -U[:, j]

    labels = None
    if assign == "discretize":
        labels = _discretize(U, k, seed)
        if labels is not None and len(np.unique(labels)) < k:
            labels = None
    if labels is None:
        norms = np.sqrt((U ** 2).sum(axis=1))
        norms[norms == 0.0] = 1.0
        fallback = kmeans(U / norms[:, None], k, init="plusplus", n_init=10, seed=seed)
        labels = fallback.labels

    labels = np.asarray(labels, dtype=np.int64)
    centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
    return ClusterAssignment(labels=labels, k=k, centroids=centroids)


# ---------------------------------------------------------------------------


def run_algorithm(X, k: int, spec: AlgorithmSpec) -> ClusterAssignment:
    params = spec.resolved()
    if spec.kind in ("kmeans", "kmeans_pp"):
        return kmeans(X, k, **params)
    if spec.kind == "ahc_ward":
        return ahc_ward(X, k)
    if spec.kind == "fuzzy_cm":
        return fuzzy_cmeans(X, k, **params)
    if spec.kind == "spectral":
        return spectral(X, k, **params)
    raise ValueError(f"unknown algorithm kind {spec.kind!r}")


def select_k(X, spec: AlgorithmSpec, k_range) -> tuple[int, ClusterAssignment, float]:
    """Run spec for each k and return the silhouette argmax (ties: smaller k)."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    points = _as_points(X)
    n = points.shape[0]
    if ks[0] < 2 or ks[-1] > n - 1:
        raise ValueError(f"k range must lie within [2, {n - 1}]")
    best = None
    for k in ks:
        assignment = run_algorithm(X, k, spec)
        score = silhouette_score(points, assignment.labels)
        if best is None or score > best[2]:
            best = (k, assignment, score)
    return best
