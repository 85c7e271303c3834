"""Cluster importance scores and ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .reviews import Review
from .summarize import ClusterSummary


@dataclass(frozen=True)
class RankingWeights:
    w_rev: float = 1.0
    w_th: float = 0.1
    w_ra: float = 1.0

    def __post_init__(self):
        for name in ("w_rev", "w_th", "w_ra"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ClusterStats:
    cluster: int
    n_reviews: int
    total_thumbs: int
    mean_rating: float

    @classmethod
    def of(cls, cluster: int, members: Sequence[Review]) -> ClusterStats:
        if not members:
            raise ValueError(f"cluster {cluster} has no members")
        return cls(
            cluster,
            len(members),
            sum(r.thumbs_up for r in members),
            sum(r.rating for r in members) / len(members),
        )


@dataclass(frozen=True)
class RankedCluster:
    stats: ClusterStats
    score: float
    summary: ClusterSummary | None
    rank: int


def cluster_score(stats: ClusterStats, w: RankingWeights | None = None) -> float:
    """(w_rev * reviews + w_th * thumbs) / (w_ra * mean rating)."""
    w = w or RankingWeights()
    if stats.mean_rating < 1:
        raise ValueError(f"cluster {stats.cluster}: mean rating {stats.mean_rating} below 1")
    return (w.w_rev * stats.n_reviews + w.w_th * stats.total_thumbs) / (w.w_ra * stats.mean_rating)


def _score_key(score: float) -> float:
    return float(f"{score:.12g}")


def rank_clusters(
    items: Sequence[tuple[ClusterStats, ClusterSummary | None]],
    w: RankingWeights | None = None,
) -> list[RankedCluster]:
    """Order by score (desc), then size (desc), then cluster id (asc).

    Scores are compared at 12 significant digits so that mathematically equal
    scores tie regardless of floating-point rounding in the weights.
    """
    w = w or RankingWeights()
    scored = [(cluster_score(s, w), s, summ) for s, summ in items]
    scored.sort(key=lambda t: (-_score_key(t[0]), -t[1].n_reviews, t[1].cluster))
    return [RankedCluster(s, score, summ, i) for i, (score, s, summ) in enumerate(scored, start=1)]
