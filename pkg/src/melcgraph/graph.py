"""Cell graphs: rank-similarity kNN, per-sample spatial kNN, propagation operator.

Two undirected graph views over the same cells:

* feature graph: every cell is linked to the k cells whose stain profiles
  rank most similarly under Kendall's tau-b, searched over the whole dataset
  so edges may cross sample boundaries;
* spatial graph: every cell is linked to its k nearest neighbours by
  Euclidean centroid distance, searched within its own sample only, so the
  overall graph is a disjoint union of per-sample graphs.

Directed k-nearest lists are symmetrized by union.  Edges are unweighted.

The tau computation is exact and thread-count independent: each profile is
expanded into the vector of pairwise order signs, whose dot products are
integer-valued and therefore immune to float summation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import CellTable, FormatError

_BLOCK_ROWS = 512


@dataclass(frozen=True)
class GraphConfig:
    k: int = 10
    mode: str = "feature"

    def __post_init__(self):
        if self.mode not in ("feature", "spatial"):
            raise ValueError(f"mode must be 'feature' or 'spatial', got {self.mode!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")


@dataclass(frozen=True)
class SparseGraph:
    """Undirected simple graph in compressed sparse row form.

    Both directions of every edge are stored; rows are sorted; no self loops.
    Node order matches the cell-table row order it was built from.
    """

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.asarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        n = self.n_nodes
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise ValueError("malformed row offsets")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= n:
                raise ValueError("column index out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        if np.any(rows == self.indices):
            raise ValueError("self loops are not allowed")
        codes = rows * n + self.indices
        if np.unique(codes).size != codes.size:
            raise ValueError("duplicate edges are not allowed")
        if not np.array_equal(np.sort(codes), np.sort(self.indices * n + rows)):
            raise ValueError("adjacency must be symmetric")

    @classmethod
    def from_directed_edges(cls, n_nodes: int, src, dst) -> "SparseGraph":
        """Union-symmetrize directed pairs into an undirected simple graph."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        u = np.concatenate([src[keep], dst[keep]])
        v = np.concatenate([dst[keep], src[keep]])
        codes = np.unique(u * np.int64(n_nodes) + v)
        rows, cols = np.divmod(codes, n_nodes)
        indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_nodes), out=indptr[1:])
        return cls(n_nodes=n_nodes, indptr=indptr, indices=cols)

    @property
    def n_edges(self) -> int:
        return self.indices.size // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """(m, 2) array of undirected edges, u < v, lexicographically ascending."""
        rows = np.repeat(np.arange(self.n_nodes, dtype=np.int64), np.diff(self.indptr))
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n_nodes, self.n_nodes))


# ---------------------------------------------------------------------------
# Kendall's tau-b

def _pair_signs(X: np.ndarray) -> np.ndarray:
    """Rows become sign vectors over all d(d-1)/2 feature pairs (a < b)."""
    X = np.asarray(X, dtype=np.float64)
    a, b = np.triu_indices(X.shape[1], k=1)
    return np.sign(X[:, a] - X[:, b])


def kendall_tau(x, y) -> float:
    """Tie-corrected rank correlation (tau-b) of two equal-length vectors.

    (C - D) / sqrt((P - T_x)(P - T_y)) with P = n(n-1)/2 total pairs, C and D
    the concordant and discordant pair counts, and T the tied-pair counts.
    NaN when either vector is constant (its pair variance vanishes).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"vectors must share one length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two entries")
    u = _pair_signs(x[None, :])[0]
    v = _pair_signs(y[None, :])[0]
    nx = float(u @ u)
    ny = float(v @ v)
    if nx == 0.0 or ny == 0.0:
        return float("nan")
    return float((u @ v) / np.sqrt(nx * ny))


def kendall_tau_matrix(X) -> np.ndarray:
    """All-pairs tau-b between rows of X; NaN rows/cols for constant rows."""
    U = _pair_signs(X)
    norms = np.sqrt((U * U).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return (U @ U.T) / np.outer(norms, norms)


def _top_k_directed(score_block, row_offset, k, out_src, out_dst):
    """Append each row's k best columns (ties to lower index, self excluded)."""
    n = score_block.shape[1]
    for r in range(score_block.shape[0]):
        score_block[r, row_offset + r] = -np.inf
    # Stable sort on the negated scores: equal scores keep ascending column
    # order, which implements the lower-index tie break.
    order = np.argsort(-score_block, axis=1, kind="stable")[:, :k]
    out_src.append(np.repeat(np.arange(score_block.shape[0]) + row_offset, k))
    out_dst.append(order.ravel())


def feature_knn(table: CellTable, config: GraphConfig) -> SparseGraph:
    """kNN by Kendall's tau over stain profiles, across the whole dataset."""
    if config.mode != "feature":
        raise ValueError("config.mode must be 'feature'")
    n = table.n_cells
    if n < config.k + 1:
        raise ValueError(f"need at least k+1 = {config.k + 1} cells, got {n}")
    U = _pair_signs(table.features)
    norms = np.sqrt((U * U).sum(axis=1))
    src, dst = [], []
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = (U[start:stop] @ U.T) / np.outer(norms[start:stop], norms)
        tau[np.isnan(tau)] = -np.inf
        _top_k_directed(tau, start, config.k, src, dst)
    return SparseGraph.from_directed_edges(n, np.concatenate(src), np.concatenate(dst))


def spatial_knn(table: CellTable, config: GraphConfig) -> SparseGraph:
    """Per-sample Euclidean kNN on centroids; samples stay disconnected."""
    if config.mode != "spatial":
        raise ValueError("config.mode must be 'spatial'")
    src, dst = [], []
    for sid in table.unique_samples():
        rows = np.nonzero(table.sample_id == sid)[0]
        m = rows.size
        if m < config.k + 1:
            raise ValueError(f"sample {sid!r} has {m} cells; spatial kNN needs at least k+1 = {config.k + 1}")
        dx = table.x[rows][:, None] - table.x[rows][None, :]
        dy = table.y[rows][:, None] - table.y[rows][None, :]
        d2 = dx * dx + dy * dy
        np.fill_diagonal(d2, np.inf)
        order = np.argsort(d2, axis=1, kind="stable")[:, : config.k]
        src.append(np.repeat(rows, config.k))
        dst.append(rows[order.ravel()])
    return SparseGraph.from_directed_edges(
        table.n_cells, np.concatenate(src), np.concatenate(dst)
    )


def build_graph(table: CellTable, config: GraphConfig) -> SparseGraph:
    if config.mode == "feature":
        return feature_knn(table, config)
    return spatial_knn(table, config)


def normalized_adjacency(graph: SparseGraph) -> sp.csr_matrix:
    """Symmetric renormalized operator D^{-1/2} (A + I) D^{-1/2}.

    Degrees are taken from A + I, so isolated nodes map to themselves with
    weight 1 and the spectral radius never exceeds 1.
    """
    a_hat = graph.to_scipy() + sp.identity(graph.n_nodes, format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
    d = sp.diags(inv_sqrt)
    return (d @ a_hat @ d).tocsr()


# ---------------------------------------------------------------------------
# graph file I/O

def save_graph(graph: SparseGraph, path) -> None:
    """Text format: ``n_nodes m_edges`` then one ascending ``u v`` per edge."""
    edges = graph.edges()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{graph.n_nodes} {edges.shape[0]}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")


def load_graph(path) -> SparseGraph:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise FormatError(path, "first line must be 'n_nodes m_edges'", line=1)
        try:
            n, m = int(head[0]), int(head[1])
        except ValueError:
            raise FormatError(path, "non-integer header field", line=1) from None
        src, dst = [], []
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            parts = raw.split()
            if len(parts) != 2:
                raise FormatError(path, f"expected 'u v', got {raw.strip()!r}", line=lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(path, "non-integer node id", line=lineno) from None
            if not 0 <= u < v < n:
                raise FormatError(path, f"edge ({u}, {v}) violates 0 <= u < v < n", line=lineno)
            src.append(u)
            dst.append(v)
    if len(src) != m:
        raise FormatError(path, f"header promises {m} edges, file has {len(src)}")
    return SparseGraph.from_directed_edges(n, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64))
