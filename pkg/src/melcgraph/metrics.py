"""Binary classification metrics and result-table formatting.

Metrics are computed cell-wise, pooled over everything passed in; a
per-sample macro average is available separately for sensitivity checks.
AUROC is the Mann-Whitney statistic (ties credited 0.5), evaluated through
average ranks so it matches brute-force pair counting exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .data import FormatError


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    auroc: float
    auroc_defined: bool
    tp: int
    fp: int
    tn: int
    fn: int
    n_evaluated: int

    def __post_init__(self):
        if self.tp + self.fp + self.tn + self.fn != self.n_evaluated:
            raise ValueError("confusion counts must sum to n_evaluated")


def _check_inputs(labels, scores):
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError(f"labels {labels.shape} and scores {scores.shape} must share one length")
    if labels.size == 0:
        raise ValueError("need at least one observation")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return labels, scores


def auroc_score(labels, scores) -> float:
    """Probability a positive outscores a negative (ties count half).

    NaN when only one class is present.
    """
    labels, scores = _check_inputs(labels, scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)  # average ranks implement the 0.5 tie credit
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metrics(labels, scores, threshold: float = 0.5) -> MetricsReport:
    """Accuracy and F1 at the threshold (score >= threshold predicts 1), AUROC."""
    labels, scores = _check_inputs(labels, scores)
    preds = scores >= threshold
    actual = labels == 1
    tp = int(np.sum(preds & actual))
    fp = int(np.sum(preds & ~actual))
    tn = int(np.sum(~preds & ~actual))
    fn = int(np.sum(~preds & actual))
    accuracy = (tp + tn) / labels.size
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    auroc = auroc_score(labels, scores)
    return MetricsReport(
        accuracy=float(accuracy),
        f1=float(f1),
        auroc=auroc,
        auroc_defined=not np.isnan(auroc),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n_evaluated=labels.size,
    )


def per_sample_metrics(labels, scores, sample_ids, threshold: float = 0.5) -> MetricsReport:
    """Unweighted mean of per-sample metrics (AUROC over samples where defined).

    Confusion counts stay pooled; only the three headline metrics are
    macro-averaged.
    """
    labels, scores = _check_inputs(labels, scores)
    sample_ids = np.asarray(sample_ids)
    if sample_ids.shape != labels.shape:
        raise ValueError("sample_ids must align with labels")
    pooled = compute_metrics(labels, scores, threshold)
    accs, f1s, aucs = [], [], []
    for sid in np.unique(sample_ids):
        m = compute_metrics(labels[sample_ids == sid], scores[sample_ids == sid], threshold)
        accs.append(m.accuracy)
        f1s.append(m.f1)
        if m.auroc_defined:
            aucs.append(m.auroc)
    return MetricsReport(
        accuracy=float(np.mean(accs)),
        f1=float(np.mean(f1s)),
        auroc=float(np.mean(aucs)) if aucs else float("nan"),
        auroc_defined=bool(aucs),
        tp=pooled.tp,
        fp=pooled.fp,
        tn=pooled.tn,
        fn=pooled.fn,
        n_evaluated=pooled.n_evaluated,
    )


# ---------------------------------------------------------------------------
# report files

def save_metrics_json(report: MetricsReport, path, context: dict | None = None) -> None:
    payload = dict(context or {})
    body = asdict(report)
    if not report.auroc_defined:
        body["auroc"] = None  # JSON has no NaN
    payload.update(body)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_metrics_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise FormatError(path, "metrics file must hold a JSON object")
    return payload


_COLUMNS = ("Embedding", "Dimension Reduction", "Accuracy", "F1-Score", "AUROC")


def format_results_table(rows) -> str:
    """Aligned text table of evaluated runs.

    ``rows`` holds dicts with keys embedding, reduction, accuracy, f1, auroc
    (NaN/None allowed for an undefined AUROC).
    """
    def fmt(v):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            return "n/a"
        return f"{v:.4f}"

    cells = [_COLUMNS] + [
        (
            str(r["embedding"]),
            str(r["reduction"]),
            fmt(r["accuracy"]),
            fmt(r["f1"]),
            fmt(r["auroc"]),
        )
        for r in rows
    ]
    widths = [max(len(row[c]) for row in cells) for c in range(len(_COLUMNS))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
