"""Static SVG plots: embedding scatter, ROC curve, training history.

SVG is written directly (no plotting dependency) so output is deterministic,
diffable, and testable by string inspection.
"""

from __future__ import annotations

import numpy as np

from .metrics import auroc_score

CANVAS = 480
MARGIN = 48
CLASS_COLORS = {0: "#1f77b4", 1: "#d62728"}


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def _svg_document(body: list) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" '
        f'viewBox="0 0 {CANVAS} {CANVAS}">'
    )
    return "\n".join([head] + body + ["</svg>"]) + "\n"


def _axes_box() -> str:
    lo, hi = MARGIN, CANVAS - MARGIN
    return (
        f'<rect x="{lo}" y="{lo}" width="{hi - lo}" height="{hi - lo}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )


def _scale(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    inner = CANVAS - 2 * MARGIN
    return MARGIN + (values - lo) / span * inner


def plot_embedding(points: np.ndarray, labels, path, title: str = "") -> None:
    """Scatter of the first two embedding columns, one circle per cell,
    colored by binary label."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or points.shape[1] < 2:
        raise ValueError("need at least two embedding columns")
    if labels.shape != (points.shape[0],):
        raise ValueError("labels must align with embedding rows")
    px = _scale(points[:, 0])
    # SVG y grows downward; flip so larger coordinates plot higher.
    py = CANVAS - _scale(points[:, 1])
    body = [_axes_box()]
    if title:
        body.append(f'<text x="{MARGIN}" y="{MARGIN - 12}" font-size="14">{title}</text>')
    for i in range(points.shape[0]):
        color = CLASS_COLORS[int(labels[i])]
        body.append(
            f'<circle cx="{_fmt(px[i])}" cy="{_fmt(py[i])}" r="2.5" '
            f'fill="{color}" fill-opacity="0.7"/>'
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_svg_document(body))


def roc_points(labels, scores) -> np.ndarray:
    """(FPR, TPR) polyline vertices over descending score thresholds."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order] == 1)
    fp = np.cumsum(labels[order] == 0)
    # Keep one vertex per distinct threshold (the last row of each tie run).
    last = np.nonzero(np.append(sorted_scores[1:] != sorted_scores[:-1], True))[0]
    tpr = np.concatenate([[0.0], tp[last] / n_pos])
    fpr = np.concatenate([[0.0], fp[last] / n_neg])
    return np.column_stack([fpr, tpr])


def plot_roc(labels, scores, path) -> None:
    """ROC polyline on the unit square with a diagonal reference line and the
    AUROC annotated; errors on single-class input."""
    pts = roc_points(labels, scores)
    auroc = auroc_score(labels, scores)
    lo, hi = MARGIN, CANVAS - MARGIN
    inner = hi - lo

    def sx(v):
        return lo + v * inner

    def sy(v):
        return hi - v * inner

    path_points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
    body = [
        _axes_box(),
        f'<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{lo}" stroke="#999999" '
        f'stroke-dasharray="4 4" stroke-width="1"/>',
        f'<polyline points="{path_points}" fill="none" stroke="#d62728" stroke-width="2"/>',
        f'<text x="{lo + 8}" y="{lo + 18}" font-size="14">AUROC = {auroc:.6f}</text>',
        f'<text x="{(lo + hi) // 2}" y="{CANVAS - 12}" font-size="12" '
        f'text-anchor="middle">false positive rate</text>',
        f'<text x="14" y="{(lo + hi) // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(lo + hi) // 2})">true positive rate</text>',
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_svg_document(body))


def plot_history(series: dict, path, title: str = "") -> None:
    """Line plot of one or more equal-meaning numeric series over epochs."""
    body = [_axes_box()]
    if title:
        body.append(f'<text x="{MARGIN}" y="{MARGIN - 12}" font-size="14">{title}</text>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    all_vals = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    lo_v, hi_v = float(all_vals.min()), float(all_vals.max())
    span = hi_v - lo_v if hi_v > lo_v else 1.0
    lo, hi = MARGIN, CANVAS - MARGIN
    inner = hi - lo
    for idx, (name, vals) in enumerate(series.items()):
        vals = np.asarray(vals, dtype=np.float64)
        if vals.size == 0:
            continue
        denom = max(vals.size - 1, 1)
        pts = " ".join(
            f"{_fmt(lo + i / denom * inner)},{_fmt(hi - (v - lo_v) / span * inner)}"
            for i, v in enumerate(vals)
        )
        color = colors[idx % len(colors)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(
            f'<text x="{lo + 8}" y="{lo + 18 + 16 * idx}" font-size="12" '
            f'fill="{color}">{name}</text>'
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_svg_document(body))
