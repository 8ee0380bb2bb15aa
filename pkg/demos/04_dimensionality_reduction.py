"""
Reducing stain profiles: PCA, t-SNE, and UMAP
=============================================

Three reductions of the same per-cell profiles, from the linear variance
decomposition to the two neighbor-preserving embeddings.  Each method is
deterministic given its seed; the t-SNE trace shows its divergence
falling, and the scatter plots land in output/ as SVG files.
"""

from pathlib import Path

import numpy as np

from melcgraph.plots import plot_embedding
from melcgraph.reduction import pca, reduce_features
from melcgraph.simulate import SimConfig, generate_dataset

out = Path(__file__).parent / "output"
out.mkdir(parents=True, exist_ok=True)

config = SimConfig(
    n_samples=3,
    fraction_melanoma=1.0,
    cells_per_sample=150,
    n_channels=12,
    field_size_px=256,
    tumor_radius_px=90.0,
    class_mean_shift=22.0,
    noise_sd=10.0,
)
table, _ = generate_dataset(config, seed=3)
X = table.features

# PCA keeps the directions of largest variance; the explained variances
# quantify how much of the signal two axes carry.
emb = pca(X, d_out=2)
var = emb.params["explained_variances"]
total = np.linalg.svd(X - X.mean(axis=0), compute_uv=False) ** 2 / (len(X) - 1)
print(f"pca: top-2 axes explain {sum(var) / total.sum():.1%} of the variance")
plot_embedding(emb.values, table.label, out / "04_pca.svg", title="pca")

# t-SNE matches neighbor distributions; the KL trace is monotone enough
# that the final layout always scores at least as well as the random
# initialization.
emb = reduce_features(X, "tsne", d_out=2, seed=0, perplexity=25.0, n_iter=500)
trace = emb.params["kl_trace"]
print(f"tsne: divergence {trace[0]:.3f} -> {trace[-1]:.3f} over {len(trace) - 1} steps")
plot_embedding(emb.values, table.label, out / "04_tsne.svg", title="tsne")

# UMAP builds a fuzzy neighbor graph (every cell keeps one full-strength
# neighbor) and lays it out by sampled attraction/repulsion.
emb = reduce_features(X, "umap", d_out=2, seed=0, n_neighbors=12, n_epochs=150)
print(f"umap: curve parameters a={emb.params['a']:.3f} b={emb.params['b']:.3f}")
plot_embedding(emb.values, table.label, out / "04_umap.svg", title="umap")

print(f"\nwrote three scatter plots under {out}")
