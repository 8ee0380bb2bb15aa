"""Command-line pipeline: simulate, ingest, build-graph, reduce, train,
evaluate, search, plot, report.

Stages communicate through files (cell tables, manifests, graph files,
embedding files, model directories, metrics JSON), so every step can be
re-run and inspected in isolation.  Exit codes: 0 success, 1 validation or
input-format error, 2 unexpected runtime failure.

The environment variable ``MELC_GRAPH_THREADS`` caps worker threads; it is
applied to the numeric libraries' own thread knobs before they load, which is
why all heavy imports happen inside the subcommands.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMBA_NUM_THREADS",
)

DEFAULT_RATIOS = "0.7,0.1,0.2"


def _apply_thread_cap() -> None:
    cap = os.environ.get("MELC_GRAPH_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ[var] = cap


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 1 (not 2) on flag validation errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_ratios(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"ratios must be three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


# ---------------------------------------------------------------------------
# shared loading helpers (imported lazily inside commands)

def _load_features(args):
    """Cell table plus the feature matrix the model should consume."""
    from .data import load_cell_table
    from .reduction import load_embedding

    table = load_cell_table(args.cells)
    if getattr(args, "embedding", None):
        carrier = load_embedding(args.embedding)
        if carrier.n_cells != table.n_cells or not (carrier.cell_id == table.cell_id).all():
            raise ValueError("embedding rows do not match the cell table")
        return table, carrier.features
    return table, table.features


def _write_scores(path, table, mask, scores) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("cell_id,sample_id,label,score\n")
        for i in mask.nonzero()[0]:
            fh.write(
                f"{int(table.cell_id[i])},{table.sample_id[i]},"
                f"{int(table.label[i])},{format(scores[i], '.9g')}\n"
            )


def _read_scores(path):
    import numpy as np

    from .data import FormatError

    labels, scores = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["cell_id", "sample_id", "label", "score"]:
            raise FormatError(path, "expected header cell_id,sample_id,label,score", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(path, f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                labels.append(int(row[2]))
                scores.append(float(row[3]))
            except ValueError:
                raise FormatError(path, "non-numeric label or score", line=lineno) from None
    return np.asarray(labels), np.asarray(scores)


def _model_paths(model_dir: Path) -> tuple:
    grand_path = model_dir / "model.grand"
    trees_path = model_dir / "model.trees"
    if grand_path.exists():
        return "grand", grand_path
    if trees_path.exists():
        return "trees", trees_path
    raise FileNotFoundError(f"no model.grand or model.trees under {model_dir}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    from .data import save_cell_table, save_manifest
    from .simulate import SimConfig, emit_images, generate_dataset, load_sim_config, save_sim_config

    config = load_sim_config(args.config) if args.config else SimConfig()
    table, manifest = generate_dataset(config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_cell_table(table, out / "cells.csv")
    save_manifest(manifest, out / "manifest.json")
    save_sim_config(config, out / "config.json")
    if args.images:
        emit_images(config, table, out / "images")
    print(f"simulated {table.n_cells} cells across {len(manifest)} samples -> {out}")
    return 0


def cmd_ingest(args) -> int:
    from .data import concat_tables, save_cell_table
    from .ingest import load_sample

    tables = [load_sample(d) for d in args.descriptors]
    merged = concat_tables(tables)
    save_cell_table(merged, args.out)
    print(f"ingested {merged.n_cells} cells from {len(tables)} samples -> {args.out}")
    return 0


def cmd_build_graph(args) -> int:
    from .data import load_cell_table
    from .graph import GraphConfig, build_graph, save_graph

    table = load_cell_table(args.cells)
    graph = build_graph(table, GraphConfig(k=args.k, mode=args.graph))
    save_graph(graph, args.out)
    print(f"{args.graph} graph: {graph.n_nodes} nodes, {graph.n_edges} edges -> {args.out}")
    return 0


def cmd_reduce(args) -> int:
    from .data import load_cell_table
    from .reduction import reduce_features, save_embedding

    table = load_cell_table(args.cells)
    emb = reduce_features(table.features, args.reduce, args.dim, seed=args.seed)
    save_embedding(table, emb, args.out)
    print(f"{args.reduce} embedding {emb.n_rows}x{emb.d_out} -> {args.out}")
    return 0


def _load_hyper(path) -> dict:
    if not path:
        return {}
    from .data import FormatError

    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise FormatError(path, "hyperparameter file must hold a JSON object")
    return payload


def cmd_train(args) -> int:
    from .data import load_manifest, make_split, save_split
    from .pipeline import grand_hyper_from, standardize

    table, feats = _load_features(args)
    manifest = load_manifest(args.manifest)
    ratios = _parse_ratios(args.ratios)
    split = make_split(manifest, ratios, args.seed)
    masks = split.masks(table)
    overrides = _load_hyper(args.hyper)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.model == "grand":
        if not args.graph:
            raise ValueError("--graph is required for the graph model")
        from .grand import save_model, train
        from .graph import load_graph, normalized_adjacency

        graph = load_graph(args.graph)
        if graph.n_nodes != table.n_cells:
            raise ValueError("graph node count does not match the cell table")
        hyper = grand_hyper_from(overrides)
        model = train(normalized_adjacency(graph), standardize(feats), table.label, masks, hyper, args.seed)
        save_model(model, out / "model.grand")
        best_acc = float(model.val_accuracy[model.best_epoch])
        print(
            f"trained grand: best val accuracy {best_acc:.4f} at epoch {model.best_epoch} "
            f"({model.val_accuracy.size} epochs run) -> {out}"
        )
    else:
        from .trees import fit_gbdt, fit_random_forest, save_ensemble

        rows = masks["train"]
        if args.model == "forest":
            model = fit_random_forest(feats[rows], table.label[rows], seed=args.seed, **overrides)
        else:
            model = fit_gbdt(feats[rows], table.label[rows], **overrides)
        save_ensemble(model, out / "model.trees")
        print(f"trained {args.model}: {len(model.trees)} trees -> {out}")
    save_split(split, out / "split.json")
    return 0


def cmd_evaluate(args) -> int:
    from .data import load_split
    from .metrics import compute_metrics, per_sample_metrics, save_metrics_json

    table, feats = _load_features(args)
    model_dir = Path(args.model_dir)
    kind, model_path = _model_paths(model_dir)
    split = load_split(model_dir / "split.json")
    masks = split.masks(table)

    if kind == "grand":
        if not args.graph:
            raise ValueError("--graph is required to evaluate the graph model")
        from .grand import load_model, predict
        from .graph import load_graph, normalized_adjacency
        from .pipeline import standardize

        graph = load_graph(args.graph)
        if graph.n_nodes != table.n_cells:
            raise ValueError("graph node count does not match the cell table")
        model = load_model(model_path)
        probs, _ = predict(model, normalized_adjacency(graph), standardize(feats))
        scores = probs[:, 1]
        model_name = "grand"
    else:
        from .trees import load_ensemble, predict_ensemble

        model = load_ensemble(model_path)
        scores = predict_ensemble(model, feats)
        model_name = model.kind

    mask = masks["test"]
    if args.per_sample:
        report = per_sample_metrics(
            table.label[mask], scores[mask], table.sample_id[mask], args.threshold
        )
    else:
        report = compute_metrics(table.label[mask], scores[mask], args.threshold)
    context = {
        "model": model_name,
        "embedding": args.label_embedding,
        "reduction": args.label_reduction,
        "n_test_cells": int(mask.sum()),
    }
    save_metrics_json(report, args.out, context)
    if args.scores_out:
        _write_scores(args.scores_out, table, mask, scores)
    auroc = f"{report.auroc:.4f}" if report.auroc_defined else "n/a"
    print(
        f"test cells {report.n_evaluated}: accuracy {report.accuracy:.4f} "
        f"f1 {report.f1:.4f} auroc {auroc} -> {args.out}"
    )
    return 0


def cmd_search(args) -> int:
    from .data import load_manifest
    from .pipeline import default_search_space, make_val_objective
    from .search import bayes_opt

    table, feats = _load_features(args)
    manifest = load_manifest(args.manifest)
    ratios = _parse_ratios(args.ratios)
    graph = None
    if args.model == "grand":
        if not args.graph:
            raise ValueError("--graph is required for the graph model")
        from .graph import load_graph

        graph = load_graph(args.graph)
        if graph.n_nodes != table.n_cells:
            raise ValueError("graph node count does not match the cell table")
    objective = make_val_objective(
        table, feats, manifest, args.model, ratios, args.seed, graph=graph, train_epochs=args.train_epochs
    )
    result = bayes_opt(
        objective,
        default_search_space(args.model),
        patience=args.patience,
        max_evals=args.max_evals,
        seed=args.seed,
    )
    payload = {
        "model": args.model,
        "best_config": result.best_config,
        "best_value": result.best_value,
        "n_evaluations": len(result.values),
        "trace": [{"config": c, "value": v} for c, v in zip(result.configs, result.values)],
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(
        f"searched {len(result.values)} configs: best val accuracy "
        f"{result.best_value:.4f} {result.best_config} -> {args.out}"
    )
    return 0


def cmd_plot(args) -> int:
    if args.kind == "embedding":
        from .plots import plot_embedding
        from .reduction import load_embedding

        if not args.embedding:
            raise ValueError("plot embedding needs --embedding")
        carrier = load_embedding(args.embedding)
        if carrier.n_features < 2:
            raise ValueError("embedding plot needs at least two columns")
        plot_embedding(carrier.features[:, :2], carrier.label, args.out, title="cell embedding")
    else:
        from .plots import plot_roc

        if not args.scores:
            raise ValueError("plot roc needs --scores")
        labels, scores = _read_scores(args.scores)
        plot_roc(labels, scores, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    from .metrics import format_results_table, load_metrics_json

    rows = []
    for path in args.metrics:
        payload = load_metrics_json(path)
        missing = [k for k in ("embedding", "reduction", "accuracy", "f1") if k not in payload]
        if missing:
            raise ValueError(f"{path}: metrics file lacks fields {missing}")
        rows.append(
            {
                "embedding": payload["embedding"],
                "reduction": payload["reduction"],
                "accuracy": payload["accuracy"],
                "f1": payload["f1"],
                "auroc": payload.get("auroc"),
            }
        )
    text = format_results_table(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="melcgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate a synthetic dataset")
    p.add_argument("--config", help="simulation config JSON (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--images", action="store_true", help="also emit mask/channel images")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="extract per-cell profiles from sample images")
    p.add_argument("descriptors", nargs="+", help="per-sample descriptor files")
    p.add_argument("--out", required=True, help="output cell table CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="construct a cell graph")
    p.add_argument("--cells", required=True)
    p.add_argument("--graph", choices=("feature", "spatial"), required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("reduce", help="reduce per-cell features")
    p.add_argument("--cells", required=True)
    p.add_argument("--reduce", choices=("none", "pca", "tsne", "umap"), required=True)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", help="fit a classifier on the train split")
    p.add_argument("--cells", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=("grand", "forest", "gbdt"), required=True)
    p.add_argument("--graph", help="graph file (grand only)")
    p.add_argument("--embedding", help="reduced-feature file; raw profiles when omitted")
    p.add_argument("--hyper", help="JSON file of hyperparameter overrides")
    p.add_argument("--ratios", default=DEFAULT_RATIOS, help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute metrics on the test split")
    p.add_argument("--cells", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--graph", help="graph file (grand only)")
    p.add_argument("--embedding", help="reduced-feature file used at training time")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--per-sample", action="store_true", help="macro-average metrics over samples")
    p.add_argument("--label-embedding", default="tabular", help="report label for the graph/input row")
    p.add_argument("--label-reduction", default="none", help="report label for the reduction")
    p.add_argument("--scores-out", help="also write per-cell test scores CSV")
    p.add_argument("--out", required=True, help="output metrics JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="Bayesian hyperparameter search on val accuracy")
    p.add_argument("--cells", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=("grand", "forest", "gbdt"), required=True)
    p.add_argument("--graph", help="graph file (grand only)")
    p.add_argument("--embedding", help="reduced-feature file; raw profiles when omitted")
    p.add_argument("--ratios", default=DEFAULT_RATIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-evals", type=int, default=60)
    p.add_argument("--train-epochs", type=int, default=400, help="epoch budget per trial (grand)")
    p.add_argument("--out", required=True, help="output JSON (best config + trace)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("plot", help="write an SVG plot")
    p.add_argument("kind", choices=("embedding", "roc"))
    p.add_argument("--embedding", help="embedding file (kind=embedding)")
    p.add_argument("--scores", help="scores CSV from evaluate (kind=roc)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("report", help="aggregate metrics files into a text table")
    p.add_argument("metrics", nargs="+", help="metrics JSON files from evaluate")
    p.add_argument("--out", help="also write the table to this path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    from .data import FormatError

    try:
        return args.func(args)
    except (FormatError, ValueError, KeyError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
