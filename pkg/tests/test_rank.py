import random

import pytest

from minibar.rank import ClusterStats, RankingWeights, cluster_score, rank_clusters
from minibar.reviews import Review
from oracles import exact_score, selection_sort


def stats(cluster, n, thumbs, mean):
    return ClusterStats(cluster, n, thumbs, mean)


def test_direct_substitution():
    assert cluster_score(stats(0, 5, 0, 2.0)) == 2.5
    assert cluster_score(stats(0, 10, 20, 1.0)) == 12.0


def test_weight_homogeneity():
    s = stats(0, 7, 13, 2.6)
    for c in (0.5, 3.0, 1e3):
        assert cluster_score(s, RankingWeights(c, 0.1 * c, c)) == pytest.approx(cluster_score(s))


def test_tie_break_by_cluster_id():
    items = [(stats(0, 5, 0, 2.0), None), (stats(1, 10, 20, 1.0), None),
             (stats(2, 5, 0, 2.0), None)]
    ranked = rank_clusters(items)
    assert [r.stats.cluster for r in ranked] == [1, 0, 2]
    assert [r.rank for r in ranked] == [1, 2, 3]


def test_tie_break_by_size_first():
    # equal scores 2.5: 5/2 and 10/4
    items = [(stats(0, 5, 0, 2.0), None), (stats(1, 10, 0, 4.0), None)]
    assert [r.stats.cluster for r in rank_clusters(items)] == [1, 0]


def test_empty():
    assert rank_clusters([]) == []


def test_stats_from_members():
    members = [Review("a", "x", "t", 1, 4), Review("b", "x", "t", 4, 0)]
    assert ClusterStats.of(3, members) == ClusterStats(3, 2, 4, 2.5)
    with pytest.raises(ValueError):
        ClusterStats.of(3, [])


def test_invalid_inputs():
    with pytest.raises(ValueError):
        RankingWeights(w_ra=0)
    with pytest.raises(ValueError):
        cluster_score(stats(0, 1, 0, 0.5))


def random_records(rng, count):
    out = []
    for cid in range(count):
        n = rng.randint(1, 40)
        ratings = [rng.randint(1, 5) for _ in range(n)]
        out.append((stats(cid, n, rng.randint(0, 60), sum(ratings) / n), sum(ratings)))
    return out


def test_order_matches_bruteforce_oracle():
    rng = random.Random(11)
    records = random_records(rng, 1000)
    exact = {s.cluster: exact_score(s.n_reviews, s.total_thumbs, total) for s, total in records}

    def before(a, b):
        ka, kb = exact[a.cluster], exact[b.cluster]
        if ka != kb:
            return ka > kb
        if a.n_reviews != b.n_reviews:
            return a.n_reviews > b.n_reviews
        return a.cluster < b.cluster

    expected = [s.cluster for s in selection_sort([s for s, _ in records], before)]
    got = [r.stats.cluster for r in rank_clusters([(s, None) for s, _ in records])]
    assert got == expected


def test_uniform_scaling_keeps_order():
    rng = random.Random(12)
    items = [(s, None) for s, _ in random_records(rng, 500)]
    base = [r.stats.cluster for r in rank_clusters(items)]
    for c in (0.3, 7.0, 123.456):
        w = RankingWeights(c, 0.1 * c, c)
        assert [r.stats.cluster for r in rank_clusters(items, w)] == base
