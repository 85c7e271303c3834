import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minibar.cluster import (NOISE, ClusterAssignment, HdbscanParams, condense_tree,
                             core_distances, extract_clusters, hdbscan, minimum_spanning_tree,
                             mutual_reachability, mutual_reachability_matrix, select_clusters)
from minibar.reduce import pairwise_distances
from oracles import mst_weight_exhaustive


def gaussian_blobs(centers, n_per, spread, seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([np.asarray(c) + spread * rng.standard_normal((n_per, len(c)))
                   for c in centers])
    return X, np.repeat(np.arange(len(centers)), n_per)


def same_partition(a, b) -> bool:
    return len(set(zip(a, b))) == len(set(a)) == len(set(b))


def test_core_distance_examples():
    assert core_distances(np.array([[0.0], [1.0], [2.0]]), 1).tolist() == [1, 1, 1]
    assert core_distances(np.array([[0.0], [1.0], [3.0]]), 2).tolist() == [3, 2, 3]
    assert core_distances(np.array([[0.0], [0.0], [5.0]]), 1).tolist()[:2] == [0, 0]


@pytest.mark.parametrize("args,expected", [((1, 2, 3), 3), ((5, 1, 1), 5), ((0, 0, 0), 0)])
def test_mutual_reachability(args, expected):
    assert mutual_reachability(*args) == expected


def test_mst_triangle():
    W = np.array([[0, 1, 3], [1, 0, 2], [3, 2, 0]], dtype=float)
    mst = minimum_spanning_tree(W)
    assert sorted(mst[:, 2].tolist()) == [1.0, 2.0]


def test_mst_on_tree_returns_the_tree():
    W = np.full((4, 4), 100.0)
    np.fill_diagonal(W, 0)
    for i, w in enumerate([1.0, 2.0, 3.0]):
        W[i, i + 1] = W[i + 1, i] = w
    edges = {(int(a), int(b)) for a, b, _ in minimum_spanning_tree(W)}
    assert {tuple(sorted(e)) for e in edges} == {(0, 1), (1, 2), (2, 3)}


@pytest.mark.parametrize("seed", range(20))
def test_mst_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = 3 + seed % 6
    W = rng.random((n, n))
    W = W + W.T
    np.fill_diagonal(W, 0)
    assert minimum_spanning_tree(W)[:, 2].sum() == pytest.approx(mst_weight_exhaustive(W))


def _mst_for(X, ms=1):
    D = pairwise_distances(X)
    return minimum_spanning_tree(mutual_reachability_matrix(D, core_distances(X, ms, D)))


def test_condense_two_groups_split_once():
    X = np.concatenate([np.linspace(0, 0.4, 5), np.linspace(100, 100.4, 5)])[:, None]
    tree = condense_tree(_mst_for(X), 5, 10)
    clusters = tree.child[tree.child >= 10]
    assert len(clusters) == 2
    assert set(tree.parent[np.isin(tree.child, clusters)]) == {tree.root}


def test_condense_single_group_never_splits():
    X = np.linspace(0, 1, 6)[:, None]
    tree = condense_tree(_mst_for(X), 5, 6)
    assert np.all(tree.child < 6) and np.all(tree.parent == tree.root)


def test_condense_small_group_falls_out_as_points():
    X = np.concatenate([np.linspace(0, 0.3, 4), np.linspace(100, 100.4, 5)])[:, None]
    tree = condense_tree(_mst_for(X), 5, 9)
    assert np.all(tree.child < 9)
    small = tree.lambda_val[np.isin(tree.child, [0, 1, 2, 3])]
    assert np.all(small == small.max()) and small.max() < tree.lambda_val.max()


def test_two_blobs_via_extract():
    X, truth = gaussian_blobs([(0, 0), (50, 50)], 10, 0.5, 0)
    labels = extract_clusters(condense_tree(_mst_for(X, 5), 5, len(X)))
    assert NOISE not in labels and same_partition(labels, truth)


def test_two_blobs_plus_outliers():
    X, truth = gaussian_blobs([(0, 0), (50, 50)], 10, 0.5, 1)
    X = np.vstack([X, [[500, -500], [-600, 400], [900, 900]]])
    labels = hdbscan(X)
    assert np.sum(labels == NOISE) == 3 and np.all(labels[-3:] == NOISE)
    assert same_partition(labels[:20], truth)


def test_gaussian_blobs_exact_recovery():
    X, truth = gaussian_blobs([(0, 0), (10, 0)], 20, 0.1, 2)
    labels = hdbscan(X)
    assert set(labels) == {0, 1} and same_partition(labels, truth)


def test_single_blob_is_one_cluster():
    X, _ = gaussian_blobs([(0, 0, 0)], 30, 1.0, 3)
    labels = hdbscan(X)
    assert set(labels) - {NOISE} == {0}


def test_tiny_ball_does_not_crash():
    X = np.random.default_rng(4).random((20, 3)) * 1e-9
    labels = hdbscan(X)
    assert set(labels) <= {NOISE, 0}


def test_duplicate_points():
    X = np.vstack([np.zeros((8, 2)), np.full((8, 2), 10.0)])
    labels = hdbscan(X)
    assert same_partition(labels, [0] * 8 + [1] * 8)


def test_below_min_size_is_all_noise():
    with pytest.warns(UserWarning):
        labels = hdbscan(np.random.default_rng(5).random((4, 2)))
    assert labels.tolist() == [NOISE] * 4


def test_labels_ordered_by_size():
    X, _ = gaussian_blobs([(0, 0), (100, 0)], 6, 0.1, 6)
    big, _ = gaussian_blobs([(0, 100)], 12, 0.1, 7)
    labels = hdbscan(np.vstack([X, big]))
    assert np.all(labels[12:] == 0)


def test_root_selected_only_as_fallback():
    X = np.linspace(0, 1, 12)[:, None]
    tree = condense_tree(_mst_for(X), 5, 12)
    assert select_clusters(tree) == [tree.root]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 40), st.integers(2, 6), st.integers(1, 3))
def test_min_cluster_size_property(seed, n, mcs, dim):
    X = np.random.default_rng(seed).standard_normal((n, dim)) * np.random.default_rng(seed).integers(1, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels = hdbscan(X, HdbscanParams(min_cluster_size=mcs))
    assert len(labels) == n
    for c in set(labels.tolist()) - {NOISE}:
        assert np.sum(labels == c) >= mcs
    if n < mcs:
        assert np.all(labels == NOISE)
    ids = sorted(set(labels.tolist()) - {NOISE})
    assert ids == list(range(len(ids)))


def test_assignment_records_roundtrip():
    a = ClusterAssignment("problem_report", ("a", "b", "c"), (0, NOISE, 0))
    assert a.n_clusters == 1 and a.n_noise == 1
    assert a.members() == {0: ["a", "c"]}
    assert a.records()[1] == {"id": "b", "category": "problem_report", "cluster": "noise"}
    assert ClusterAssignment.from_records("problem_report", a.records()) == a


def test_params_validation():
    with pytest.raises(ValueError):
        HdbscanParams(min_cluster_size=1)
    assert HdbscanParams().effective_min_samples == 5
