"""HDBSCAN over dense distance matrices.

Core distances -> mutual reachability -> Prim MST -> single-linkage hierarchy
condensed by minimum cluster size -> excess-of-mass cluster selection.
Everything is O(n^2) in memory and time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .reduce import pairwise_distances

NOISE = -1


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 5
    min_samples: int | None = None

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


@dataclass
class CondensedTree:
    """Rows (parent, child, lambda, child_size).

    Points are ids ``0..n-1``; clusters are ``n..``, the root being ``n``.
    A cluster's children always carry larger ids than the cluster itself.
    """

    parent: np.ndarray
    child: np.ndarray
    lambda_val: np.ndarray
    child_size: np.ndarray
    n_points: int

    @property
    def root(self) -> int:
        return self.n_points

    def cluster_ids(self) -> np.ndarray:
        kids = self.child[self.child >= self.n_points]
        return np.concatenate([[self.root], np.sort(kids)]).astype(np.int64)


def core_distances(X, min_samples: int, D: np.ndarray | None = None) -> np.ndarray:
    """Distance from each point to its ``min_samples``-th nearest other point."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n <= min_samples:
        raise ValueError(f"need more than min_samples={min_samples} points, got {n}")
    if D is None:
        D = pairwise_distances(X)
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    return np.partition(D, min_samples - 1, axis=1)[:, min_samples - 1]


def mutual_reachability(d_ab, core_a, core_b):
    return np.maximum(np.maximum(core_a, core_b), d_ab)


def mutual_reachability_matrix(D: np.ndarray, core: np.ndarray) -> np.ndarray:
    M = mutual_reachability(D, core[:, None], core[None, :])
    np.fill_diagonal(M, 0.0)
    return M


def minimum_spanning_tree(W) -> np.ndarray:
    """Prim's algorithm on a dense symmetric weight matrix.

    Returns an (n-1, 3) array of ``(u, v, weight)`` rows with ``u < v``, in
    the order edges were added. Among equal-weight candidates the edge with
    the lower (min endpoint, max endpoint) pair is taken.
    """
    W = np.asarray(W, dtype=np.float64)
    n = len(W)
    if n < 2:
        raise ValueError("minimum_spanning_tree needs at least 2 nodes")
    if not np.all(np.isfinite(W)):
        raise ValueError("weights must be finite")
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = W[0].copy()
    best_from = np.zeros(n, dtype=np.int64)
    idx = np.arange(n)
    edges = np.empty((n - 1, 3))
    for step in range(n - 1):
        cand = np.flatnonzero(~in_tree)
        w = best_w[cand]
        tied = cand[w == w.min()]
        if len(tied) > 1:
            lo = np.minimum(tied, best_from[tied])
            hi = np.maximum(tied, best_from[tied])
            v = tied[np.lexsort((hi, lo))[0]]
        else:
            v = tied[0]
        u = best_from[v]
        edges[step] = (min(u, v), max(u, v), best_w[v])
        in_tree[v] = True
        row = W[v]
        # strictly better weight, or equal weight via a lower-indexed endpoint pair
        key_new_lo = np.minimum(idx, v)
        key_old_lo = np.minimum(idx, best_from)
        better = (row < best_w) | (
            (row == best_w)
            & ((key_new_lo < key_old_lo)
               | ((key_new_lo == key_old_lo) & (np.maximum(idx, v) < np.maximum(idx, best_from))))
        )
        better &= ~in_tree
        best_w[better] = row[better]
        best_from[better] = v
    return edges


def single_linkage(mst: np.ndarray, n: int) -> np.ndarray:
    """Merge tree from MST edges: rows (left, right, distance, size), new ids n..2n-2."""
    order = np.lexsort((mst[:, 1], mst[:, 0], mst[:, 2]))
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.empty((n - 1, 4))
    for step, e in enumerate(order):
        u, v, w = int(mst[e, 0]), int(mst[e, 1]), mst[e, 2]
        ru, rv = find(u), find(v)
        node = n + step
        parent[ru] = parent[rv] = node
        size[node] = size[ru] + size[rv]
        out[step] = (ru, rv, w, size[node])
    return out


def _leaves(hierarchy: np.ndarray, node: int, n: int) -> list[int]:
    stack, out = [node], []
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            left, right = hierarchy[x - n, :2].astype(np.int64)
            stack.extend((right, left))
    return out


def condense_tree(mst: np.ndarray, min_cluster_size: int, n: int | None = None) -> CondensedTree:
    """Condense the single-linkage hierarchy of ``mst``.

    Walking down from the root, a split counts only when both sides keep at
    least ``min_cluster_size`` points; otherwise the small side's points leave
    the parent at that lambda. Zero distances get a lambda twice the largest
    finite one.
    """
    mst = np.asarray(mst, dtype=np.float64)
    n = len(mst) + 1 if n is None else n
    hierarchy = single_linkage(mst, n)
    dists = hierarchy[:, 2]
    positive = dists[dists > 0]
    lam_cap = 2.0 / positive.min() if positive.size else 1.0

    def lam(d):
        return 1.0 / d if d > 0 else lam_cap

    def count(node):
        return 1 if node < n else int(hierarchy[node - n, 3])

    rows: list[tuple[int, int, float, int]] = []
    root = 2 * n - 2
    label = {root: n}
    next_label = n + 1
    queue = [root]
    head = 0
    while head < len(queue):
        node = queue[head]
        head += 1
        left, right, d, _ = hierarchy[node - n]
        left, right = int(left), int(right)
        lv = lam(d)
        cl, cr = count(left), count(right)
        here = label[node]
        if cl >= min_cluster_size and cr >= min_cluster_size:
            for child, c in ((left, cl), (right, cr)):
                label[child] = next_label
                rows.append((here, next_label, lv, c))
                next_label += 1
                queue.append(child)
        else:
            for child, c in ((left, cl), (right, cr)):
                if c >= min_cluster_size:
                    label[child] = here
                    queue.append(child)
                else:
                    rows.extend((here, p, lv, 1) for p in _leaves(hierarchy, child, n))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return CondensedTree(
        parent=arr[:, 0].astype(np.int64),
        child=arr[:, 1].astype(np.int64),
        lambda_val=arr[:, 2],
        child_size=arr[:, 3].astype(np.int64),
        n_points=n,
    )


def stabilities(tree: CondensedTree) -> dict[int, float]:
    """Excess of mass per cluster: sum over members of (lambda_leave - lambda_birth)."""
    birth = {tree.root: 0.0}
    for c, lv in zip(tree.child, tree.lambda_val):
        if c >= tree.n_points:
            birth[int(c)] = float(lv)
    stab = {c: 0.0 for c in birth}
    for p, lv, size in zip(tree.parent, tree.lambda_val, tree.child_size):
        stab[int(p)] += (lv - birth[int(p)]) * size
    return stab


def select_clusters(tree: CondensedTree) -> list[int]:
    stab = stabilities(tree)
    children: dict[int, list[int]] = {c: [] for c in stab}
    for p, c in zip(tree.parent, tree.child):
        if c >= tree.n_points:
            children[int(p)].append(int(c))
    selected = {c: True for c in stab}
    score = dict(stab)
    for c in sorted(stab, reverse=True):
        if c == tree.root:
            continue
        kid_sum = sum(score[k] for k in children[c])
        if children[c] and kid_sum > stab[c]:
            selected[c] = False
            score[c] = kid_sum
        else:
            stack = list(children[c])
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(children[k])
    chosen = [c for c in sorted(stab) if c != tree.root and selected[c]]
    # the root stands in only when no proper cluster exists
    return chosen if chosen else [tree.root]


def extract_clusters(tree: CondensedTree) -> np.ndarray:
    """Flat labels (cluster ids 0..K-1 in selection order, NOISE = -1) per point."""
    chosen = select_clusters(tree)
    owner = {c: i for i, c in enumerate(chosen)}
    n = tree.n_points
    assigned: dict[int, int] = {}
    for c in tree.cluster_ids():
        c = int(c)
        if c in owner:
            assigned[c] = owner[c]
    parent_of = {int(c): int(p) for p, c in zip(tree.parent, tree.child) if c >= n}
    for c in tree.cluster_ids():
        c = int(c)
        if c not in assigned:
            assigned[c] = assigned.get(parent_of.get(c, -1), NOISE)
    labels = np.full(n, NOISE, dtype=np.int64)
    for p, c in zip(tree.parent, tree.child):
        if c < n:
            labels[c] = assigned[int(p)]
    return labels


def _renumber_by_size(labels: np.ndarray) -> np.ndarray:
    ids = [c for c in np.unique(labels) if c != NOISE]
    members = {c: np.flatnonzero(labels == c) for c in ids}
    order = sorted(ids, key=lambda c: (-len(members[c]), members[c][0]))
    out = np.full_like(labels, NOISE)
    for new, c in enumerate(order):
        out[members[c]] = new
    return out


def hdbscan(X, params: HdbscanParams | None = None) -> np.ndarray:
    """Cluster rows of ``X``; returns labels 0..K-1 (largest cluster first) or NOISE."""
    params = params or HdbscanParams()
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    mcs = params.min_cluster_size
    if n < mcs or n < 2:
        warnings.warn(f"{n} points < min_cluster_size={mcs}; everything is noise", stacklevel=2)
        return np.full(n, NOISE, dtype=np.int64)
    ms = params.effective_min_samples
    if ms >= n:
        warnings.warn(f"min_samples={ms} clamped to {n - 1}", stacklevel=2)
        ms = n - 1
    D = pairwise_distances(X)
    core = core_distances(X, ms, D)
    mst = minimum_spanning_tree(mutual_reachability_matrix(D, core))
    tree = condense_tree(mst, mcs, n)
    labels = _renumber_by_size(extract_clusters(tree))
    for c in np.unique(labels[labels != NOISE]):
        assert np.sum(labels == c) >= mcs, "cluster below min_cluster_size"
    return labels


@dataclass(frozen=True)
class ClusterAssignment:
    category: str
    ids: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.labels):
            raise ValueError("ids and labels differ in length")

    @property
    def n_clusters(self) -> int:
        return len({x for x in self.labels if x != NOISE})

    @property
    def n_noise(self) -> int:
        return sum(1 for x in self.labels if x == NOISE)

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for rid, lab in zip(self.ids, self.labels):
            if lab != NOISE:
                out.setdefault(lab, []).append(rid)
        return dict(sorted(out.items()))

    def records(self) -> list[dict]:
        return [{"id": rid, "category": self.category,
                 "cluster": "noise" if lab == NOISE else int(lab)}
                for rid, lab in zip(self.ids, self.labels)]

    @classmethod
    def from_records(cls, category: str, records: Sequence[dict]) -> ClusterAssignment:
        rows = [r for r in records if r["category"] == category]
        return cls(category, tuple(r["id"] for r in rows),
                   tuple(NOISE if r["cluster"] == "noise" else int(r["cluster"]) for r in rows))
