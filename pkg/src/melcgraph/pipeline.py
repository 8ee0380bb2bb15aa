"""End-to-end experiment orchestration shared by the command line and tests.

One experiment = sample-level split, optional dimensionality reduction,
optional graph construction, model fit, metrics on the pooled test cells.
Graphs are always built from the raw inputs (stain profiles for the feature
graph, centroids for the spatial graph); reduction only re-encodes the node
features handed to the classifier.  The graph classifier's features are
z-scored column-wise before training; tree baselines consume the feature
matrix as-is (thresholds are scale-free).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .data import CellTable, SampleManifest, make_split
from .graph import GraphConfig, build_graph, normalized_adjacency
from .grand import GrandHyper, predict, train
from .metrics import MetricsReport, compute_metrics, per_sample_metrics
from .reduction import reduce_features
from .trees import fit_gbdt, fit_random_forest, predict_ensemble

DEFAULT_RATIOS = (0.7, 0.1, 0.2)
MODELS = ("grand", "forest", "gbdt")


@dataclass(frozen=True)
class ExperimentConfig:
    graph_mode: str = "spatial"  # feature | spatial; unused by tree models
    k: int = 10
    reduce: str = "none"  # none | pca | tsne | umap
    d_out: int = 16
    model: str = "grand"
    ratios: tuple = DEFAULT_RATIOS
    seed: int = 0
    grand: dict = field(default_factory=dict)  # GrandHyper overrides
    trees: dict = field(default_factory=dict)  # forest/gbdt keyword overrides
    reducer: dict = field(default_factory=dict)  # reducer keyword overrides
    per_sample: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")


def standardize(X: np.ndarray) -> np.ndarray:
    """Column z-scores; constant columns map to zero."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mean) / sd


def grand_hyper_from(overrides: dict) -> GrandHyper:
    known = {f.name for f in fields(GrandHyper)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ValueError(f"unknown hyperparameters: {unknown}")
    return GrandHyper(**overrides)


def model_features(table: CellTable, config: ExperimentConfig) -> np.ndarray:
    """Features the classifier sees, after the configured reduction."""
    emb = reduce_features(
        table.features, config.reduce, config.d_out, seed=config.seed, **config.reducer
    )
    return emb.values


def run_experiment(table: CellTable, manifest: SampleManifest, config: ExperimentConfig) -> dict:
    """Run split -> reduce -> (graph) -> fit -> metrics; returns a result dict.

    The result carries the metrics report, the split, test-cell scores, and
    table-row labels for downstream reporting.
    """
    split = make_split(manifest, config.ratios, config.seed)
    masks = split.masks(table)
    feats = model_features(table, config)

    if config.model == "grand":
        graph = build_graph(table, GraphConfig(k=config.k, mode=config.graph_mode))
        a_hat = normalized_adjacency(graph)
        hyper = grand_hyper_from(config.grand)
        z = standardize(feats)
        model = train(a_hat, z, table.label, masks, hyper, config.seed)
        probs, _ = predict(model, a_hat, z)
        scores = probs[:, 1]
        embedding_label = f"{config.graph_mode} graph (k={config.k})"
    else:
        train_rows = masks["train"]
        if config.model == "forest":
            model = fit_random_forest(
                feats[train_rows], table.label[train_rows], seed=config.seed, **config.trees
            )
        else:
            model = fit_gbdt(feats[train_rows], table.label[train_rows], **config.trees)
        scores = predict_ensemble(model, feats)
        embedding_label = "tabular"

    test_rows = masks["test"]
    if config.per_sample:
        report = per_sample_metrics(
            table.label[test_rows], scores[test_rows], table.sample_id[test_rows]
        )
    else:
        report = compute_metrics(table.label[test_rows], scores[test_rows])
    reduction_label = "none" if config.reduce == "none" else f"{config.reduce}-{config.d_out}"
    return {
        "embedding": embedding_label,
        "reduction": reduction_label,
        "model": config.model,
        "seed": config.seed,
        "metrics": report,
        "scores": scores,
        "split": split,
        "fitted": model,
    }


def metrics_row(result: dict) -> dict:
    """Project one experiment result onto the result-table columns."""
    report: MetricsReport = result["metrics"]
    return {
        "embedding": result["embedding"],
        "reduction": result["reduction"],
        "accuracy": report.accuracy,
        "f1": report.f1,
        "auroc": report.auroc,
    }


# ---------------------------------------------------------------------------
# hyperparameter search plumbing

def default_search_space(model: str):
    """Searchable hyperparameters per model family."""
    from .search import ParamSpec, SearchSpace

    if model == "grand":
        return SearchSpace(
            (
                ParamSpec("learning_rate", 1e-4, 3e-2, log=True),
                ParamSpec("drop_rate", 0.1, 0.7),
                ParamSpec("propagation_order", 1, 8, integer=True),
                ParamSpec("consistency_weight", 0.1, 4.0, log=True),
            )
        )
    if model == "forest":
        return SearchSpace(
            (
                ParamSpec("n_trees", 50, 400, integer=True),
                ParamSpec("max_depth", 2, 12, integer=True),
            )
        )
    if model == "gbdt":
        return SearchSpace(
            (
                ParamSpec("n_rounds", 50, 400, integer=True),
                ParamSpec("max_depth", 2, 8, integer=True),
                ParamSpec("learning_rate", 0.01, 0.5, log=True),
            )
        )
    raise ValueError(f"model must be one of {MODELS}, got {model!r}")


def make_val_objective(
    table: CellTable,
    feats: np.ndarray,
    manifest: SampleManifest,
    model: str,
    ratios=DEFAULT_RATIOS,
    seed: int = 0,
    graph=None,
    train_epochs: int = 400,
):
    """Validation-accuracy objective over hyperparameter dicts.

    The split, features, and propagation operator are fixed up front so every
    trial measures only the hyperparameters.  For the graph model the epoch
    budget is capped at ``train_epochs`` to keep trials affordable.
    """
    split = make_split(manifest, ratios, seed)
    masks = split.masks(table)
    val_rows = masks["val"]
    val_labels = table.label[val_rows]
    if model == "grand":
        if graph is None:
            raise ValueError("the graph model needs a prebuilt graph")
        a_hat = normalized_adjacency(graph)
        z = standardize(feats)

        def objective(params: dict) -> float:
            hyper = grand_hyper_from({**params, "max_epochs": train_epochs})
            fitted = train(a_hat, z, table.label, masks, hyper, seed)
            return float(fitted.val_accuracy[fitted.best_epoch])

        return objective

    train_rows = masks["train"]
    x_train, y_train = feats[train_rows], table.label[train_rows]
    x_val = feats[val_rows]

    def objective(params: dict) -> float:
        if model == "forest":
            fitted = fit_random_forest(x_train, y_train, seed=seed, **params)
        else:
            fitted = fit_gbdt(x_train, y_train, **params)
        preds = predict_ensemble(fitted, x_val) >= 0.5
        return float((preds == (val_labels == 1)).mean())

    return objective
