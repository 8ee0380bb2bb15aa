"""Dimensionality reduction of per-cell profiles: PCA plus dispatch.

All reducers return an :class:`EmbeddingMatrix` whose rows align with the
input rows.  The stochastic methods (in :mod:`.tsne` and :mod:`.umap`) are
made permutation-equivariant by running on a canonical row ordering and
mapping the result back, so shuffling the input rows shuffles the output rows
identically under the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CellTable, _load_table, _save_table

METHODS = ("none", "pca", "tsne", "umap")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Reduced features, one row per cell, plus provenance of the method."""

    values: np.ndarray
    method: str
    params: dict

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 2:
            raise ValueError("embedding must be a 2-D matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding entries must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def d_out(self) -> int:
        return self.values.shape[1]


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Row order that sorts rows lexicographically (column 0 is primary)."""
    return np.lexsort(np.asarray(X).T[::-1])


def pca_decompose(X: np.ndarray) -> tuple:
    """Full PCA of column-centered X: (components, explained_variances, mean).

    Components are rows, eigenvalue-descending, each signed so its
    largest-magnitude loading is positive.  Explained variances are
    singular_value^2 / (n - 1).
    """
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    flip = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    flip[flip == 0] = 1.0
    vt = vt * flip[:, None]
    n = X.shape[0]
    variances = s**2 / (n - 1) if n > 1 else s**2
    return vt, variances, mean


def pca(X: np.ndarray, d_out: int) -> EmbeddingMatrix:
    """Project onto the top principal axes of the column-centered data."""
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= d_out <= min(X.shape):
        raise ValueError(f"d_out must lie in [1, {min(X.shape)}], got {d_out}")
    components, variances, mean = pca_decompose(X)
    values = (X - mean) @ components[:d_out].T
    return EmbeddingMatrix(
        values=values,
        method="pca",
        params={"d_out": d_out, "explained_variances": variances[:d_out].tolist()},
    )


def reduce_features(
    X: np.ndarray,
    method: str,
    d_out: int,
    seed: int = 0,
    **kwargs,
) -> EmbeddingMatrix:
    """Uniform entry point over the reduction methods.

    ``none`` passes features through unchanged (d_out ignored).
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    X = np.asarray(X, dtype=np.float64)
    if method == "none":
        return EmbeddingMatrix(values=X.copy(), method="none", params={})
    if method == "pca":
        return pca(X, d_out)
    if method == "tsne":
        from .tsne import tsne

        return tsne(X, d_out=d_out, seed=seed, **kwargs)
    from .umap import umap

    return umap(X, d_out=d_out, seed=seed, **kwargs)


def save_embedding(table: CellTable, embedding: EmbeddingMatrix, path) -> None:
    """Cell-table layout with the profile columns replaced by e0..e{d-1}."""
    if embedding.n_rows != table.n_cells:
        raise ValueError("embedding rows must match table rows")
    carrier = CellTable(
        cell_id=table.cell_id,
        sample_id=table.sample_id,
        x=table.x,
        y=table.y,
        features=embedding.values,
        label=table.label,
    )
    _save_table(carrier, path, "e")


def load_embedding(path) -> CellTable:
    """Embedding file parsed into a CellTable whose features are e-columns."""
    return _load_table(path, "e")
