"""Exact (quadratic-cost) tSNE for desk-scale inputs.

High-dimensional affinities: per-point Gaussian bandwidths found by binary
search so every conditional distribution hits the target perplexity, then
symmetrized to P_ij = (p_{j|i} + p_{i|j}) / (2n), which sums to one over all
ordered pairs.  Low-dimensional affinities are Student-t with one degree of
freedom.  The layout minimizes KL(P || Q) by gradient descent with momentum
0.5 switching to 0.8 at iteration 250 and early exaggeration (P x 12) during
the first 250 iterations.  The KL trace is recorded against the
unexaggerated P, so it is comparable across the whole run.

Rows are canonically reordered before the seeded initialization and restored
afterwards, which makes the embedding permutation-equivariant.
"""

from __future__ import annotations

import numpy as np

from .reduction import EmbeddingMatrix, canonical_order

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
MOMENTUM_SWITCH_ITER = 250
PERPLEXITY_TOL = 1e-5
INIT_SCALE = 1e-2


def squared_distances(X: np.ndarray) -> np.ndarray:
    """Exact pairwise squared Euclidean distances via explicit differences."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], X.shape[0]))
    for i in range(X.shape[0]):
        diff = X - X[i]
        out[i] = (diff * diff).sum(axis=1)
    return out


def _row_distribution(d2_row: np.ndarray, beta: float) -> np.ndarray:
    w = np.exp(-(d2_row - d2_row.min()) * beta)
    return w / w.sum()


def _perplexity(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(2.0 ** (-(nz * np.log2(nz)).sum()))


def conditional_probabilities(d2: np.ndarray, perplexity: float, tol: float = PERPLEXITY_TOL):
    """Per-row Gaussian conditionals matched to the target perplexity.

    ``d2`` holds pairwise squared distances; diagonal entries are excluded.
    Returns (P_conditional, betas) where beta_i = 1/(2 sigma_i^2).  The binary
    search expands its bracket as needed and stops once the row's perplexity
    is within ``tol`` of the target (or at 100 iterations, whichever first).
    """
    n = d2.shape[0]
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        row = d2[i, others]
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(100):
            p = _row_distribution(row, beta)
            gap = _perplexity(p) - perplexity
            if abs(gap) <= tol:
                break
            if gap > 0:  # too flat: tighten
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        P[i, others] = _row_distribution(row, beta)
        betas[i] = beta
    return P, betas


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities P_ij = (p_{j|i} + p_{i|j}) / (2n); sums to 1."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    cond, _ = conditional_probabilities(squared_distances(X), perplexity)
    return (cond + cond.T) / (2.0 * n)


def _kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-12))).sum())


def _q_matrix(Y: np.ndarray) -> tuple:
    w = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(w, 0.0)
    return w / w.sum(), w


def tsne(
    X: np.ndarray,
    d_out: int = 2,
    perplexity: float = 30.0,
    n_iter: int = 1000,
    seed: int = 0,
    learning_rate: float = 10.0,
) -> EmbeddingMatrix:
    """Embed rows of X into d_out dimensions; deterministic given the seed.

    The returned params carry the KL(P||Q) trace; entry 0 is the divergence of
    the random initialization and the last entry the final layout's.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 4:
        raise ValueError("tsne needs at least 4 rows")
    if d_out not in (2, 3):
        raise ValueError("d_out must be 2 or 3")
    if not 1.0 <= perplexity < n:
        raise ValueError(f"perplexity must lie in [1, n), got {perplexity}")
    if n_iter < 1:
        raise ValueError("n_iter must be positive")

    order = canonical_order(X)
    inverse = np.argsort(order)
    P = joint_probabilities(X[order], perplexity)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, INIT_SCALE, size=(n, d_out))
    velocity = np.zeros_like(Y)
    kl_trace = [_kl_divergence(P, _q_matrix(Y)[0])]
    for it in range(n_iter):
        target = P * EXAGGERATION if it < EXAGGERATION_ITERS else P
        Q, w = _q_matrix(Y)
        M = (target - Q) * w
        grad = 4.0 * ((np.diag(M.sum(axis=1)) - M) @ Y)
        momentum = MOMENTUM_EARLY if it < MOMENTUM_SWITCH_ITER else MOMENTUM_LATE
        velocity = momentum * velocity - learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        kl_trace.append(_kl_divergence(P, _q_matrix(Y)[0]))

    return EmbeddingMatrix(
        values=Y[inverse],
        method="tsne",
        params={
            "d_out": d_out,
            "perplexity": perplexity,
            "n_iter": n_iter,
            "seed": seed,
            "learning_rate": learning_rate,
            "kl_trace": kl_trace,
        },
    )
