"""Validity index tests against brute-force oracles and analytic cases."""

import math

import numpy as np
import pytest

from erasmo.metrics import calinski_harabasz, davies_bouldin, silhouette_score

from oracles import chi_bruteforce, dbi_bruteforce, silhouette_bruteforce, total_scatter


def random_instance(rng, n=None, k=2):
    n = n if n is not None else rng.integers(6, 13)
    points = rng.standard_normal((int(n), 3))
    while True:
        labels = rng.integers(0, k, size=int(n))
        if len(np.unique(labels)) == k:
            return points, labels


# ---------------------------------------------------------------------------
# silhouette


def test_silhouette_two_tight_far_pairs_is_one():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]])
    assert silhouette_score(X, [0, 0, 1, 1]) == 1.0


def test_silhouette_all_coincident_is_zero():
    X = np.zeros((6, 2))
    assert silhouette_score(X, [0, 0, 0, 1, 1, 1]) == 0.0


def test_silhouette_matches_bruteforce_6_points():
    X = np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], dtype=float)
    labels = [0, 0, 0, 1, 1, 1]
    mine = silhouette_score(X, labels)
    oracle = silhouette_bruteforce(X.tolist(), labels)
    assert abs(mine - oracle) < 1e-9


def test_silhouette_matches_bruteforce_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        points, labels = random_instance(rng, k=int(rng.integers(2, 4)))
        mine = silhouette_score(points, labels)
        oracle = silhouette_bruteforce(points.tolist(), labels.tolist())
        assert abs(mine - oracle) < 1e-9


def test_silhouette_singleton_cluster_scores_zero():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 10.0]])
    labels = [0, 0, 1]
    mine = silhouette_score(X, labels)
    oracle = silhouette_bruteforce(X.tolist(), labels)
    assert abs(mine - oracle) < 1e-12


def test_silhouette_needs_two_clusters():
    with pytest.raises(ValueError):
        silhouette_score(np.zeros((3, 2)), [0, 0, 0])


# ---------------------------------------------------------------------------
# CHI


def test_chi_scatter_decomposition_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        points, labels = random_instance(rng, k=3)
        n, k = len(points), 3
        overall = points.mean(axis=0)
        trace_b = trace_w = 0.0
        for c in range(k):
            members = points[labels == c]
            centroid = members.mean(axis=0)
            trace_b += len(members) * float(((centroid - overall) ** 2).sum())
            trace_w += float(((members - centroid) ** 2).sum())
        assert abs((trace_b + trace_w) - total_scatter(points.tolist())) < 1e-9


def test_chi_two_tight_far_blobs_is_large():
    rng = np.random.default_rng(2)
    blob_a = rng.normal(0.0, 0.01, size=(20, 2))
    blob_b = rng.normal(0.0, 0.01, size=(20, 2)) + [50.0, 0.0]
    X = np.vstack([blob_a, blob_b])
    labels = [0] * 20 + [1] * 20
    value = calinski_harabasz(X, labels)
    assert value > 1e3
    assert abs(value - chi_bruteforce(X.tolist(), labels)) / value < 1e-9


def test_chi_increases_as_labels_refine():
    rng = np.random.default_rng(3)
    blob_a = rng.normal(0.0, 0.5, size=(15, 2))
    blob_b = rng.normal(0.0, 0.5, size=(15, 2)) + [8.0, 0.0]
    X = np.vstack([blob_a, blob_b])
    true_labels = np.array([0] * 15 + [1] * 15)
    corrupted = true_labels.copy()
    corrupted[[0, 1, 2, 15, 16, 17]] = 1 - corrupted[[0, 1, 2, 15, 16, 17]]
    partially_fixed = true_labels.copy()
    partially_fixed[[0, 15]] = 1 - partially_fixed[[0, 15]]
    scores = [
        calinski_harabasz(X, corrupted),
        calinski_harabasz(X, partially_fixed),
        calinski_harabasz(X, true_labels),
    ]
    assert scores[0] < scores[1] < scores[2]


def test_chi_matches_bruteforce_random():
    rng = np.random.default_rng(4)
    for _ in range(100):
        points, labels = random_instance(rng, k=int(rng.integers(2, 4)))
        mine = calinski_harabasz(points, labels)
        oracle = chi_bruteforce(points.tolist(), labels.tolist())
        assert abs(mine - oracle) / max(1.0, oracle) < 1e-9


def test_chi_zero_within_dispersion_returns_inf():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 0.0], [5.0, 0.0]])
    assert calinski_harabasz(X, [0, 0, 1, 1]) == float("inf")


def test_chi_requires_k_below_n():
    X = np.eye(3)
    with pytest.raises(ValueError):
        calinski_harabasz(X, [0, 1, 2])


# ---------------------------------------------------------------------------
# DBI


def test_dbi_coincident_cluster_points_is_zero():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 0.0], [5.0, 0.0]])
    assert davies_bouldin(X, [0, 0, 1, 1]) == 0.0


def test_dbi_matches_bruteforce_6_points():
    X = np.array([[0, 0], [1, 1], [0, 1], [4, 4], [5, 4], [4, 5]], dtype=float)
    labels = [0, 0, 0, 1, 1, 1]
    mine = davies_bouldin(X, labels)
    oracle = dbi_bruteforce(X.tolist(), labels)
    assert abs(mine - oracle) < 1e-9


def test_dbi_matches_bruteforce_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        points, labels = random_instance(rng, k=int(rng.integers(2, 4)))
        mine = davies_bouldin(points, labels)
        oracle = dbi_bruteforce(points.tolist(), labels.tolist())
        assert abs(mine - oracle) < 1e-9


def test_dbi_scale_invariant():
    rng = np.random.default_rng(6)
    points, labels = random_instance(rng, n=10, k=3)
    base = davies_bouldin(points, labels)
    scaled = davies_bouldin(points * 37.5, labels)
    assert abs(base - scaled) < 1e-9


def test_dbi_coincident_centroids_error_names_pair():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
    labels = [0, 0, 1, 1]  # both centroids at (1, 0)
    with pytest.raises(ValueError, match="0 and 1"):
        davies_bouldin(X, labels)


# ---------------------------------------------------------------------------
# shared invariances


def rigid_motion(points, rng):
    theta = rng.uniform(0, 2 * math.pi)
    rotation = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    return points @ rotation.T + rng.uniform(-5, 5, size=2)


def test_indices_invariant_under_rigid_motion():
    rng = np.random.default_rng(7)
    points = rng.standard_normal((12, 2))
    labels = [0, 1, 2] * 4
    moved = rigid_motion(points, rng)
    assert abs(silhouette_score(points, labels) - silhouette_score(moved, labels)) < 1e-7
    assert (
        abs(calinski_harabasz(points, labels) - calinski_harabasz(moved, labels))
        / calinski_harabasz(points, labels)
        < 1e-7
    )
    assert abs(davies_bouldin(points, labels) - davies_bouldin(moved, labels)) < 1e-7


def test_indices_invariant_under_scaling():
    rng = np.random.default_rng(8)
    points = rng.standard_normal((10, 3))
    labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    c = 4.25
    assert abs(silhouette_score(points, labels) - silhouette_score(points * c, labels)) < 1e-9
    chi_a = calinski_harabasz(points, labels)
    chi_b = calinski_harabasz(points * c, labels)
    assert abs(chi_a - chi_b) / chi_a < 1e-9


def test_indices_invariant_under_label_permutation():
    rng = np.random.default_rng(9)
    points = rng.standard_normal((9, 2))
    labels = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    swapped = np.array([2, 2, 2, 0, 0, 0, 1, 1, 1])
    assert silhouette_score(points, labels) == silhouette_score(points, swapped)
    assert calinski_harabasz(points, labels) == calinski_harabasz(points, swapped)
    assert davies_bouldin(points, labels) == davies_bouldin(points, swapped)


def test_empty_cluster_rejected():
    with pytest.raises(ValueError, match="empty"):
        silhouette_score(np.zeros((4, 2)), [0, 0, 2, 2])
