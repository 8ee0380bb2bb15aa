"""Self-contained UMAP: fuzzy k-neighbor memberships plus sampled SGD layout.

Construction follows the standard recipe: exact Euclidean k-nearest
neighbors; per-point offset rho_i (distance to the nearest neighbor) and
bandwidth sigma_i found by binary search so the smoothed neighbor weights sum
to log2(n_neighbors); fuzzy union W = A + A^T - A o A^T.  The output curve
1/(1 + a r^(2b)) has (a, b) least-squares fit to the min_dist target.  Layout
optimization is the usual edge-sampled attract/repel SGD with 5 negative
samples per positive, gradient components clipped to [-4, 4], and a linearly
annealed learning rate.

Determinism: rows are canonically reordered before the seeded Gaussian
initialization (making the result permutation-equivariant), and the layout
kernel runs single-threaded with an explicit xorshift generator so results do
not depend on thread count or global RNG state.
"""

from __future__ import annotations

import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .reduction import EmbeddingMatrix, canonical_order

SMOOTH_K_TOL = 1e-5
NEGATIVE_SAMPLE_RATE = 5
GRAD_CLIP = 4.0
INIT_SCALE = 1e-2
MIN_SIGMA = 1e-12
_CURVE_GRID_MAX = 3.0
_CURVE_GRID_POINTS = 300


def fit_curve_params(min_dist: float, spread: float = 1.0) -> tuple:
    """(a, b) minimizing squared error of 1/(1+a r^(2b)) against the target
    curve (1 for r <= min_dist, exp(-(r - min_dist)/spread) beyond)."""
    r = np.linspace(0.0, _CURVE_GRID_MAX * spread, _CURVE_GRID_POINTS)
    target = np.where(r <= min_dist, 1.0, np.exp(-(r - min_dist) / spread))
    (a, b), _ = curve_fit(lambda x, a, b: 1.0 / (1.0 + a * x ** (2.0 * b)), r, target)
    return float(a), float(b)


def exact_knn(X: np.ndarray, n_neighbors: int, block: int = 512) -> tuple:
    """Indices and distances of each row's n_neighbors nearest other rows.

    Ties resolve to the lower row index.  Distances are Euclidean.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    sq = (X * X).sum(axis=1)
    idx = np.empty((n, n_neighbors), dtype=np.int64)
    dist = np.empty((n, n_neighbors))
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :n_neighbors]
        idx[start:stop] = order
        dist[start:stop] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def smooth_knn(dist: np.ndarray, tol: float = SMOOTH_K_TOL) -> tuple:
    """Per-row (rho, sigma): offset and bandwidth of the fuzzy membership.

    rho_i is the distance to the nearest neighbor; sigma_i solves
    sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k) by binary search to
    ``tol`` (bracket doubling upward first, at most 100 steps).
    """
    n, k = dist.shape
    target = np.log2(k)
    rho = dist[:, 0].copy()
    sigma = np.ones(n)
    for i in range(n):
        shifted = np.maximum(dist[i] - rho[i], 0.0)
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(100):
            psum = np.exp(-shifted / max(mid, MIN_SIGMA)).sum()
            if abs(psum - target) <= tol:
                break
            if psum > target:
                hi = mid
                mid = (lo + mid) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (mid + hi) / 2.0
        sigma[i] = max(mid, MIN_SIGMA)
    return rho, sigma


def fuzzy_memberships(X: np.ndarray, n_neighbors: int) -> sp.csr_matrix:
    """Symmetric fuzzy graph W = A + A^T - A o A^T over the kNN strengths."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 2 <= n_neighbors < n:
        raise ValueError(f"n_neighbors must lie in [2, n), got {n_neighbors} for n = {n}")
    idx, dist = exact_knn(X, n_neighbors)
    rho, sigma = smooth_knn(dist)
    strengths = np.exp(-np.maximum(dist - rho[:, None], 0.0) / sigma[:, None])
    rows = np.repeat(np.arange(n, dtype=np.int64), n_neighbors)
    A = sp.csr_matrix((strengths.ravel(), (rows, idx.ravel())), shape=(n, n))
    At = A.T.tocsr()
    support = (A + At).tocoo()
    a = np.asarray(A[support.row, support.col]).ravel()
    b = np.asarray(At[support.row, support.col]).ravel()
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    # hi + lo*(1-hi) equals a + b - a*b but keeps a strength-1 direction at
    # exactly 1.0 through the union
    W = sp.csr_matrix((hi + lo * (1.0 - hi), (support.row, support.col)), shape=(n, n))
    W.eliminate_zeros()
    return W.tocsr()


@numba.njit(inline="always")
def _next_state(state):
    state = state ^ (state << np.uint64(13))
    state = state ^ (state >> np.uint64(7))
    state = state ^ (state << np.uint64(17))
    return state


@numba.njit(inline="always")
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(cache=True)
def _layout_kernel(Y, head, tail, eps, a, b, n_epochs, initial_alpha, state):
    n = Y.shape[0]
    dim = Y.shape[1]
    m = head.shape[0]
    next_pos = eps.copy()
    eps_neg = eps / NEGATIVE_SAMPLE_RATE
    next_neg = eps_neg.copy()
    for epoch in range(n_epochs):
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
        for e in range(m):
            if next_pos[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            d2 = 0.0
            for c in range(dim):
                diff = Y[i, c] - Y[j, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2**b + 1.0)
            else:
                coeff = 0.0
            for c in range(dim):
                g = _clip(coeff * (Y[i, c] - Y[j, c]))
                Y[i, c] += alpha * g
                Y[j, c] -= alpha * g
            next_pos[e] += eps[e]
            n_neg = int((epoch - next_neg[e]) / eps_neg[e])
            for _ in range(n_neg):
                state = _next_state(state)
                other = int(state % np.uint64(n))
                if other == i:
                    continue
                d2 = 0.0
                for c in range(dim):
                    diff = Y[i, c] - Y[other, c]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = 2.0 * b / ((0.001 + d2) * (a * d2**b + 1.0))
                else:
                    coeff = 0.0
                for c in range(dim):
                    if coeff > 0.0:
                        g = _clip(coeff * (Y[i, c] - Y[other, c]))
                    else:
                        g = GRAD_CLIP
                    Y[i, c] += alpha * g
            next_neg[e] += n_neg * eps_neg[e]
    return Y


def umap(
    X: np.ndarray,
    d_out: int = 16,
    n_neighbors: int = 15,
    min_dist: float = 0.1,
    n_epochs: int = 200,
    seed: int = 0,
) -> EmbeddingMatrix:
    """Embed rows of X into d_out dimensions; deterministic given the seed."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if d_out < 1:
        raise ValueError("d_out must be >= 1")
    if not 2 <= n_neighbors < n:
        raise ValueError(f"n_neighbors must lie in [2, n), got {n_neighbors} for n = {n}")
    if min_dist < 0:
        raise ValueError("min_dist must be >= 0")
    if n_epochs < 1:
        raise ValueError("n_epochs must be positive")

    order = canonical_order(X)
    inverse = np.argsort(order)
    W = fuzzy_memberships(X[order], n_neighbors).tocoo()
    a, b = fit_curve_params(min_dist)

    # Edges rarer than once per run are dropped, as in the standard schedule.
    keep = W.data >= W.data.max() / n_epochs
    head = W.row[keep].astype(np.int64)
    tail = W.col[keep].astype(np.int64)
    weights = W.data[keep]
    eps = weights.max() / weights

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, INIT_SCALE, size=(n, d_out))
    state = np.uint64(rng.integers(1, np.iinfo(np.int64).max))
    Y = _layout_kernel(Y, head, tail, eps, a, b, n_epochs, 1.0, state)
    return EmbeddingMatrix(
        values=Y[inverse],
        method="umap",
        params={
            "d_out": d_out,
            "n_neighbors": n_neighbors,
            "min_dist": min_dist,
            "n_epochs": n_epochs,
            "seed": seed,
            "a": a,
            "b": b,
        },
    )
