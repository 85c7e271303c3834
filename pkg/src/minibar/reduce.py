"""Dimensionality reduction: exact PCA and a neighbor-graph (UMAP-style) layout."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy import sparse
from scipy.optimize import curve_fit
from scipy.spatial.distance import cdist

SMOOTH_KNN_ITERS = 64
NEGATIVE_SAMPLE_RATE = 5
GRAD_CLIP = 4.0
INIT_RANGE = 10.0


@dataclass(frozen=True)
class ReducerParams:
    out_dim: int = 20
    n_neighbors: int = 100
    min_dist: float = 0.0
    n_epochs: int = 200
    seed: int = 42
    curve_a: float | None = None
    curve_b: float | None = None

    def __post_init__(self):
        if self.out_dim < 1:
            raise ValueError("out_dim must be positive")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.min_dist < 0:
            raise ValueError("min_dist must be >= 0")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be positive")
        for name in ("curve_a", "curve_b"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class NeighborGraph:
    indices: np.ndarray      # (n, k) neighbor ids, nearest first
    distances: np.ndarray    # (n, k)
    rho: np.ndarray
    sigma: np.ndarray
    weights: sparse.csr_matrix  # symmetric, entries in (0, 1]


def pca_reduce(X, out_dim: int) -> np.ndarray:
    """Project mean-centered rows onto the leading principal components.

    Components are ordered by decreasing variance, and each is signed so its
    largest-magnitude loading is positive. Columns beyond the numerical rank
    of ``X`` are zero.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("pca_reduce needs at least 2 rows")
    if out_dim > min(n, d):
        raise ValueError(f"out_dim={out_dim} exceeds min(n, d)={min(n, d)}")
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    tol = s.max(initial=0.0) * max(n, d) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    comps = vt[:out_dim].copy()
    for i, row in enumerate(comps):
        if row[np.argmax(np.abs(row))] < 0:
            comps[i] = -row
    Y = Xc @ comps.T
    if rank < out_dim:
        warnings.warn(f"data rank {rank} < out_dim {out_dim}; padding with zero columns",
                      stacklevel=2)
        Y[:, rank:] = 0.0
    return Y


def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return cdist(X, X)


def knn_graph(X, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force k nearest neighbors (self excluded), ties to the lower index."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise ValueError("knn_graph needs at least 2 points")
    if k > n - 1:
        warnings.warn(f"n_neighbors={k} clamped to {n - 1}", stacklevel=2)
        k = n - 1
    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(D, idx, axis=1)


def _membership_sum(d: np.ndarray, rho: float, sigma: float) -> float:
    return float(np.exp(-np.maximum(0.0, d - rho) / sigma).sum())


def calibrate_sigmas(distances, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma) so that each point's fuzzy membership sums to log2(k).

    ``distances`` is (n, k), nearest first. Bisection runs on
    [1e-3, 1e3] times the point's mean neighbor distance; points whose target
    lies outside the reachable range are clamped to the bracket end.
    """
    dist = np.atleast_2d(np.asarray(distances, dtype=np.float64))
    k = dist.shape[1] if k is None else k
    if k < 2:
        raise ValueError("calibrate_sigmas needs k >= 2")
    target = math.log2(k)
    global_mean = float(dist.mean()) if dist.size else 1.0
    rho = dist[:, 0].copy()
    sigma = np.empty(len(dist))
    for i, d in enumerate(dist):
        mean_d = float(d.mean())
        if mean_d <= 0.0:
            mean_d = global_mean if global_mean > 0 else 1.0
        lo, hi = 1e-3 * mean_d, 1e3 * mean_d
        if _membership_sum(d, rho[i], lo) >= target:
            sigma[i] = lo
            continue
        if _membership_sum(d, rho[i], hi) <= target:
            sigma[i] = hi
            continue
        a, b = lo, hi
        for _ in range(SMOOTH_KNN_ITERS):
            mid = 0.5 * (a + b)
            if _membership_sum(d, rho[i], mid) > target:
                b = mid
            else:
                a = mid
        sigma[i] = 0.5 * (a + b)
    return rho, sigma


def fuzzy_union(w_ij, w_ji):
    """Probabilistic t-conorm; elementwise for dense and sparse inputs alike."""
    if sparse.issparse(w_ij):
        return w_ij + w_ji - w_ij.multiply(w_ji)
    return w_ij + w_ji - w_ij * w_ji


def fuzzy_graph(X, k: int) -> NeighborGraph:
    X = np.asarray(X, dtype=np.float64)
    idx, dist = knn_graph(X, k)
    k = idx.shape[1]
    if k < 2:
        rho = dist[:, 0].copy()
        sigma = np.ones(len(X))
    else:
        rho, sigma = calibrate_sigmas(dist, k)
    w = np.exp(-np.maximum(0.0, dist - rho[:, None]) / sigma[:, None])
    n = len(X)
    rows = np.repeat(np.arange(n), k)
    directed = sparse.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, n))
    sym = fuzzy_union(directed, directed.T)
    sym = sparse.csr_matrix(sym)
    sym.eliminate_zeros()
    sym.data = np.minimum(sym.data, 1.0)
    return NeighborGraph(idx, dist, rho, sigma, sym)


def _curve(d, a, b):
    return 1.0 / (1.0 + a * d ** (2 * b))


def target_curve(d, min_dist: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist)))


def fit_curve(min_dist: float) -> tuple[float, float]:
    """Least-squares (a, b) for 1 / (1 + a d^2b) against the offset exponential."""
    if min_dist < 0:
        raise ValueError("min_dist must be >= 0")
    xs = np.linspace(0.0, 3.0, 300)
    ys = target_curve(xs, min_dist)
    # fit in log space so positivity holds by construction
    def model(d, log_a, log_b):
        return _curve(d, np.exp(log_a), np.exp(log_b))
    (log_a, log_b), _ = curve_fit(model, xs, ys, p0=(0.0, 0.0), method="lm", maxfev=10000)
    return float(np.exp(log_a)), float(np.exp(log_b))


@numba.njit(cache=True)
def _sgd_epoch(Y, heads, tails, negatives, a, b, lr, clip):
    dim = Y.shape[1]
    for e in range(heads.shape[0]):
        i = heads[e]
        j = tails[e]
        d2 = 0.0
        for c in range(dim):
            diff = Y[i, c] - Y[j, c]
            d2 += diff * diff
        if d2 > 0.0:
            coeff = -2.0 * a * b * d2 ** (b - 1.0) / (1.0 + a * d2 ** b)
        else:
            coeff = 0.0
        for c in range(dim):
            g = coeff * (Y[i, c] - Y[j, c])
            if g > clip:
                g = clip
            elif g < -clip:
                g = -clip
            Y[i, c] += g * lr
            Y[j, c] -= g * lr
        for s in range(negatives.shape[1]):
            m = negatives[e, s]
            if m == i:
                continue
            d2 = 0.0
            for c in range(dim):
                diff = Y[i, c] - Y[m, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = 2.0 * b / ((0.001 + d2) * (1.0 + a * d2 ** b))
            else:
                coeff = 0.0
            for c in range(dim):
                if coeff > 0.0:
                    g = coeff * (Y[i, c] - Y[m, c])
                    if g > clip:
                        g = clip
                    elif g < -clip:
                        g = -clip
                else:
                    g = clip
                Y[i, c] += g * lr


def optimize_layout(Y: np.ndarray, graph: sparse.csr_matrix, n_epochs: int, a: float, b: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Sampled attraction along edges, repulsion from random points.

    Edge (i, j) with weight w is sampled once every max(w)/w epochs, so the
    sampling rate is proportional to its weight. Learning rate decays
    linearly from 1 to 0.
    """
    coo = graph.tocoo()
    keep = coo.data >= coo.data.max() / n_epochs
    heads = coo.row[keep].astype(np.int64)
    tails = coo.col[keep].astype(np.int64)
    w = coo.data[keep]
    order = np.lexsort((tails, heads))
    heads, tails, w = heads[order], tails[order], w[order]
    every = w.max() / w
    next_due = every.copy()
    n = len(Y)
    for epoch in range(n_epochs):
        due = np.flatnonzero(next_due <= epoch + 1)
        if due.size:
            negatives = rng.integers(0, n, size=(due.size, NEGATIVE_SAMPLE_RATE))
            lr = 1.0 - epoch / n_epochs
            _sgd_epoch(Y, heads[due], tails[due], negatives, a, b, lr, GRAD_CLIP)
            next_due[due] += every[due]
    return Y


def umap_reduce(X, params: ReducerParams | None = None) -> np.ndarray:
    params = params or ReducerParams()
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise ValueError("umap_reduce needs at least 2 points")
    if X.shape[1] <= params.out_dim:
        raise ValueError(f"out_dim={params.out_dim} must be below input dim {X.shape[1]}")
    if params.curve_a is not None and params.curve_b is not None:
        a, b = params.curve_a, params.curve_b
    else:
        a, b = fit_curve(params.min_dist)
    rng = np.random.default_rng(params.seed)
    Y = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(n, params.out_dim))
    k = min(params.n_neighbors, n - 1)
    if k < params.n_neighbors:
        warnings.warn(f"n_neighbors={params.n_neighbors} clamped to {k}", stacklevel=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        graph = fuzzy_graph(X, k)
    if graph.weights.nnz == 0:
        return Y
    return optimize_layout(Y, graph.weights, params.n_epochs, a, b, rng)


def random_projection(X, out_dim: int, seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    R = np.random.default_rng(seed).standard_normal((X.shape[1], out_dim)) / math.sqrt(out_dim)
    return X @ R


def reduce(X, method: str = "umap", params: ReducerParams | None = None) -> np.ndarray:
    params = params or ReducerParams()
    X = np.asarray(X, dtype=np.float64)
    if method == "none":
        return X
    if method == "pca":
        return pca_reduce(X, min(params.out_dim, *X.shape))
    if method == "umap":
        if X.shape[1] <= params.out_dim:
            return X
        return umap_reduce(X, params)
    raise ValueError(f"unknown reducer {method!r}")
