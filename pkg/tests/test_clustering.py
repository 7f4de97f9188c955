"""Clustering tests: brute-force oracles, fixtures with known structure,
determinism, and the silhouette-driven k sweep."""

import math

import numpy as np
import pytest

from erasmo.clustering import (
    AlgorithmSpec,
    ahc_ward,
    fuzzy_cmeans,
    fuzzy_memberships,
    jacobi_eigh,
    kmeans,
    rbf_affinity,
    run_algorithm,
    select_k,
    spectral,
)

from oracles import (
    adjusted_rand_index,
    best_two_partition_by_sse,
    labels_match_up_to_permutation,
    ward_naive,
)


def blobs(rng, centers, per=10, scale=0.3):
    points = []
    labels = []
    for label, center in enumerate(centers):
        points.append(rng.normal(0.0, scale, size=(per, len(center))) + center)
        labels.extend([label] * per)
    return np.vstack(points), np.array(labels)


def rings_fixture(n_per=30, r1=1.0, r2=3.0):
    points = []
    for i in range(n_per):
        angle = 2 * math.pi * i / n_per
        points.append([r1 * math.cos(angle), r1 * math.sin(angle)])
    for i in range(n_per):
        angle = 2 * math.pi * (i + 0.5) / n_per
        points.append([r2 * math.cos(angle), r2 * math.sin(angle)])
    return np.asarray(points), [0] * n_per + [1] * n_per


# ---------------------------------------------------------------------------
# kmeans


def test_kmeans_two_pair_fixture_matches_sse_oracle():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    _, best_left = best_two_partition_by_sse(X.tolist())
    assert best_left in (frozenset({0, 1}), frozenset({2, 3}))
    assignment = kmeans(X, 2, seed=0)
    groups = {
        frozenset(np.flatnonzero(assignment.labels == c).tolist()) for c in range(2)
    }
    assert groups == {frozenset({0, 1}), frozenset({2, 3})}


def test_kmeans_k_equals_n_gives_singletons():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 2))
    assignment = kmeans(X, 6, seed=0)
    assert sorted(assignment.labels.tolist()) == list(range(6))
    assert assignment.inertia == pytest.approx(0.0, abs=1e-12)


def test_kmeans_deterministic_per_seed():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 3))
    a = kmeans(X, 3, seed=5)
    b = kmeans(X, 3, seed=5)
    assert np.array_equal(a.labels, b.labels)


def test_kmeans_sse_non_increasing():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((40, 2))
    assignment = kmeans(X, 4, seed=0, n_init=1)
    history = assignment.sse_history
    assert len(history) >= 1
    assert all(later <= earlier + 1e-9 for earlier, later in zip(history, history[1:]))


def test_kmeans_plusplus_recovers_blobs():
    rng = np.random.default_rng(3)
    X, truth = blobs(rng, [(0, 0), (12, 0), (0, 12)])
    assignment = kmeans(X, 3, init="plusplus", n_init=1, seed=0)
    assert adjusted_rand_index(assignment.labels.tolist(), truth.tolist()) == 1.0


def test_kmeans_validates_inputs():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError):
        kmeans(np.eye(3), 1)
    with pytest.raises(ValueError):
        kmeans(np.eye(3), 4)
    with pytest.raises(ValueError, match="distinct"):
        kmeans(X, 2)


def test_kmeans_repairs_empty_clusters():
    # three distinct points, k=3, forced coincident init would leave empties
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    assignment = kmeans(X, 3, seed=0)
    assert len(np.unique(assignment.labels)) == 3


# ---------------------------------------------------------------------------
# ward


def test_ward_matches_naive_oracle_on_random_instances():
    rng = np.random.default_rng(4)
    for trial in range(300):
        n = int(rng.integers(3, 11))
        k = int(rng.integers(2, n + 1))
        X = rng.standard_normal((n, int(rng.integers(1, 4))))
        mine = ahc_ward(X, k).labels.tolist()
        oracle = ward_naive(X.tolist(), k)
        assert mine == oracle, (trial, n, k)


def test_ward_groups_far_pairs():
    X = np.array([[0.0, 0.0], [0.0, 0.1], [50.0, 0.0], [50.0, 0.1]])
    labels = ahc_ward(X, 2).labels
    assert labels[0] == labels[1] and labels[2] == labels[3]
    assert labels[0] != labels[2]


def test_ward_k_equals_n():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((5, 2))
    assert ahc_ward(X, 5).labels.tolist() == list(range(5))


def test_ward_partition_equivariant_under_row_permutation():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((9, 2))
    base = ahc_ward(X, 3).labels
    perm = rng.permutation(9)
    permuted = ahc_ward(X[perm], 3).labels
    # same partition of the underlying points
    restored = np.empty(9, dtype=int)
    restored[perm] = permuted
    assert labels_match_up_to_permutation(base.tolist(), restored.tolist(), 3)


# ---------------------------------------------------------------------------
# fuzzy c-means


def test_fuzzy_rows_stochastic_every_iteration():
    rng = np.random.default_rng(7)
    X, _ = blobs(rng, [(0, 0), (6, 0)], per=15)
    _, memberships_trace, _ = fuzzy_cmeans(X, 2, seed=0, return_trace=True)
    assert len(memberships_trace) >= 2
    for memberships in memberships_trace:
        sums = memberships.sum(axis=1)
        assert np.abs(sums - 1.0).max() < 1e-9
        assert memberships.min() >= 0.0 and memberships.max() <= 1.0


def test_fuzzy_objective_non_increasing():
    rng = np.random.default_rng(8)
    X, _ = blobs(rng, [(0, 0), (5, 5)], per=12)
    _, _, objective = fuzzy_cmeans(X, 2, seed=1, return_trace=True)
    assert all(b <= a + 1e-9 for a, b in zip(objective, objective[1:]))


def test_fuzzy_equidistant_point_splits_half():
    centers = np.array([[-1.0, 0.0], [1.0, 0.0]])
    point = np.array([[0.0, 0.7]])
    memberships = fuzzy_memberships(point, centers, m=2.0)
    assert memberships[0, 0] == pytest.approx(0.5, abs=1e-6)
    assert memberships[0, 1] == pytest.approx(0.5, abs=1e-6)


def test_fuzzy_point_on_centroid_gets_full_membership():
    centers = np.array([[0.0, 0.0], [3.0, 0.0]])
    memberships = fuzzy_memberships(np.array([[0.0, 0.0]]), centers, m=2.0)
    assert memberships[0].tolist() == [1.0, 0.0]


def test_fuzzy_matches_kmeans_on_separated_blobs():
    rng = np.random.default_rng(9)
    X, _ = blobs(rng, [(0, 0), (10, 0), (5, 9)], per=10)
    fuzzy_labels = fuzzy_cmeans(X, 3, seed=0).labels
    kmeans_labels = kmeans(X, 3, seed=0).labels
    assert labels_match_up_to_permutation(
        fuzzy_labels.tolist(), kmeans_labels.tolist(), 3
    )


def test_fuzzy_deterministic():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((20, 2))
    a = fuzzy_cmeans(X, 2, seed=3)
    b = fuzzy_cmeans(X, 2, seed=3)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.memberships, b.memberships)


# ---------------------------------------------------------------------------
# spectral


def test_jacobi_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        M = rng.standard_normal((n, n))
        A = (M + M.T) / 2
        values, vectors = jacobi_eigh(A)
        oracle = np.sort(np.linalg.eigvalsh(A))
        assert np.abs(values - oracle).max() < 1e-9
        assert np.abs(A @ vectors - vectors * values).max() < 1e-9
        assert np.abs(vectors.T @ vectors - np.eye(n)).max() < 1e-9


def test_normalized_laplacian_eigenvalue_bounds():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((25, 3))
    affinity = rbf_affinity(X, 1.0 / 3)
    degrees = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    laplacian = np.eye(25) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    values, _ = jacobi_eigh(laplacian)
    assert values.min() >= -1e-8
    assert values.max() <= 2.0 + 1e-8


def test_spectral_recovers_disconnected_components_exactly():
    # groups so far apart the RBF affinity underflows to exact zeros
    rng = np.random.default_rng(13)
    left = rng.normal(0.0, 0.5, size=(12, 2))
    right = rng.normal(0.0, 0.5, size=(14, 2)) + [1000.0, 0.0]
    X = np.vstack([left, right])
    affinity = rbf_affinity(X, 1.0)
    assert affinity[:12, 12:].max() == 0.0
    labels = spectral(X, 2, seed=10, gamma=1.0).labels
    truth = [0] * 12 + [1] * 14
    assert adjusted_rand_index(labels.tolist(), truth) == 1.0


def test_spectral_separates_rings_where_kmeans_fails():
    X, truth = rings_fixture()
    spectral_labels = spectral(X, 2, seed=10, gamma=4.0).labels
    kmeans_labels = kmeans(X, 2, seed=0).labels
    assert adjusted_rand_index(spectral_labels.tolist(), truth) == 1.0
    assert adjusted_rand_index(kmeans_labels.tolist(), truth) < 0.5


def test_spectral_deterministic():
    X, _ = rings_fixture(n_per=15)
    a = spectral(X, 2, seed=10)
    b = spectral(X, 2, seed=10)
    assert np.array_equal(a.labels, b.labels)


def test_spectral_rejects_oversized_input():
    from erasmo.clustering import SPECTRAL_MAX_POINTS

    X = np.zeros((SPECTRAL_MAX_POINTS + 1, 2))
    with pytest.raises(ValueError):
        spectral(X, 2)


# ---------------------------------------------------------------------------
# select_k and specs


def test_select_k_finds_three_blobs():
    rng = np.random.default_rng(14)
    X, _ = blobs(rng, [(0, 0), (14, 0), (7, 12)], per=12, scale=0.5)
    best_k, assignment, score = select_k(
        X, AlgorithmSpec.default("kmeans"), range(2, 7)
    )
    assert best_k == 3
    assert assignment.k == 3
    assert score > 0.7


def test_select_k_single_choice():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((10, 2))
    best_k, _, _ = select_k(X, AlgorithmSpec.default("kmeans"), [2])
    assert best_k == 2


def test_select_k_deterministic():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((18, 2))
    runs = [select_k(X, AlgorithmSpec.default("ahc_ward"), range(2, 5)) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1].labels, runs[1][1].labels)


def test_select_k_argmax_scale_invariant():
    rng = np.random.default_rng(17)
    X, _ = blobs(rng, [(0, 0), (9, 0)], per=8, scale=0.6)
    for kind in ("kmeans", "ahc_ward", "fuzzy_cm"):
        spec = AlgorithmSpec.default(kind)
        base_k, _, _ = select_k(X, spec, range(2, 5))
        scaled_k, _, _ = select_k(X * 3.7, spec, range(2, 5))
        assert base_k == scaled_k, kind


def test_select_k_validates_range():
    X = np.random.default_rng(18).standard_normal((8, 2))
    with pytest.raises(ValueError):
        select_k(X, AlgorithmSpec.default("kmeans"), [])
    with pytest.raises(ValueError):
        select_k(X, AlgorithmSpec.default("kmeans"), [8])


def test_algorithm_spec_validation():
    with pytest.raises(ValueError):
        AlgorithmSpec(kind="dbscan")
    with pytest.raises(ValueError):
        AlgorithmSpec(kind="kmeans", params={"bogus": 1})
    spec = AlgorithmSpec(kind="kmeans", params={"n_init": 3})
    assert spec.resolved()["n_init"] == 3
    assert spec.resolved()["init"] == "random"


def test_run_algorithm_dispatches_all_kinds():
    rng = np.random.default_rng(19)
    X, _ = blobs(rng, [(0, 0), (8, 0)], per=8)
    for kind in ("kmeans", "kmeans_pp", "ahc_ward", "fuzzy_cm", "spectral"):
        assignment = run_algorithm(X, 2, AlgorithmSpec.default(kind))
        assert assignment.k == 2
        assert len(np.unique(assignment.labels)) == 2


def test_paper_parameter_defaults():
    assert AlgorithmSpec.default("kmeans").resolved() == {
        "init": "random", "n_init": 10, "seed": 0, "max_iter": 300, "tol": 1e-4,
    }
    assert AlgorithmSpec.default("kmeans_pp").resolved() == {
        "init": "plusplus", "n_init": 1, "seed": 0, "max_iter": 300, "tol": 1e-4,
    }
    assert AlgorithmSpec.default("fuzzy_cm").resolved() == {
        "m": 2.0, "error": 0.005, "maxiter": 1000, "seed": 0,
    }
    assert AlgorithmSpec.default("spectral").resolved() == {
        "seed": 10, "gamma": None, "assign": "discretize",
    }
