"""Decision-tree baselines: single CART, bagged forest, logistic boosting.

Split search is exact: every midpoint between consecutive sorted unique
feature values is scored.  Minimizing weighted Gini impurity over a binary
0/1 target and minimizing squared error over real-valued targets both reduce
to maximizing sum_L^2/n_L + sum_R^2/n_R of the target, so one splitter serves
the classification trees and the boosting regression trees.  Ties are broken
toward the lowest feature index, then the lowest threshold; zero-gain splits
are permitted (a parity-style dataset needs them to make progress).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FormatError

_HESS_EPS = 1e-12


@dataclass
class TreeNode:
    """Internal nodes carry (feature, threshold <= goes left); leaves a value."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def validate(self) -> None:
        if (self.left is None) != (self.right is None):
            raise ValueError("internal nodes need both children")
        if self.left is not None:
            self.left.validate()
            self.right.validate()


@dataclass(frozen=True)
class EnsembleModel:
    kind: str  # forest | boosted
    trees: tuple
    n_features: int
    learning_rate: float = 1.0
    init_score: float = 0.0
    loss_history: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("forest", "boosted"):
            raise ValueError(f"kind must be 'forest' or 'boosted', got {self.kind!r}")
        if len(self.trees) < 1:
            raise ValueError("ensemble needs at least one tree")
        for t in self.trees:
            t.validate()


def _best_split(X, target, idx, feature_ids):
    """Highest-scoring (objective, feature, threshold) over the candidates.

    Returns None when no feature offers two distinct values.  First-seen wins
    on exact objective ties, so scanning features in ascending index order and
    thresholds in ascending value order implements the documented tie break.
    """
    best = None
    t = target[idx]
    for j in feature_ids:
        x = X[idx, j]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ts = t[order]
        boundary = np.nonzero(xs[1:] != xs[:-1])[0]  # split after position b
        if boundary.size == 0:
            continue
        n_left = boundary + 1.0
        sum_left = np.cumsum(ts)[boundary]
        n, total = xs.size, ts.sum()
        obj = sum_left**2 / n_left + (total - sum_left) ** 2 / (n - n_left)
        thr = (xs[boundary] + xs[boundary + 1]) / 2.0
        # Guard against midpoints that round up to the right value.
        ok = thr < xs[boundary + 1]
        if not ok.any():
            continue
        b = int(np.nonzero(ok)[0][np.argmax(obj[ok])])
        if best is None or obj[b] > best[0]:
            best = (float(obj[b]), int(j), float(thr[b]), idx[order[: boundary[b] + 1]], idx[order[boundary[b] + 1 :]])
    return best


def _grow(X, target, idx, depth, max_depth, min_leaf, n_sub, rng, leaf_value):
    node = TreeNode()
    t = target[idx]
    if depth >= max_depth or idx.size < 2 * min_leaf or np.all(t == t[0]):
        node.value = leaf_value(idx)
        return node
    d = X.shape[1]
    if n_sub is not None and n_sub < d:
        feature_ids = np.sort(rng.choice(d, size=n_sub, replace=False))
    else:
        feature_ids = np.arange(d)
    found = _best_split(X, target, idx, feature_ids)
    if found is None:
        node.value = leaf_value(idx)
        return node
    _, j, thr, left_idx, right_idx = found
    if left_idx.size < min_leaf or right_idx.size < min_leaf:
        node.value = leaf_value(idx)
        return node
    node.feature = j
    node.threshold = thr
    node.left = _grow(X, target, left_idx, depth + 1, max_depth, min_leaf, n_sub, rng, leaf_value)
    node.right = _grow(X, target, right_idx, depth + 1, max_depth, min_leaf, n_sub, rng, leaf_value)
    return node


def fit_tree(X, y, max_depth: int, min_leaf: int = 1, n_sub_features: int | None = None, rng=None) -> TreeNode:
    """CART classification tree; leaves hold the class-1 fraction."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be 2-D with one label per row")
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if n_sub_features is not None and rng is None:
        raise ValueError("feature subsampling needs an rng")
    idx = np.arange(X.shape[0])
    return _grow(X, y, idx, 0, max_depth, min_leaf, n_sub_features, rng, lambda i: float(y[i].mean()))


def predict_tree(node: TreeNode, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        cur, idx = stack.pop()
        if idx.size == 0:
            continue
        if cur.is_leaf:
            out[idx] = cur.value
            continue
        goes_left = X[idx, cur.feature] <= cur.threshold
        stack.append((cur.left, idx[goes_left]))
        stack.append((cur.right, idx[~goes_left]))
    return out


def fit_random_forest(
    X,
    y,
    n_trees: int = 200,
    max_depth: int = 8,
    seed: int = 0,
    min_leaf: int = 1,
    bootstrap: bool = True,
    n_sub_features: int | None = None,
    tree_seeds=None,
) -> EnsembleModel:
    """Bagged CART trees with per-split random feature subsets.

    Per-tree generators are spawned from one seeded parent, so each tree is
    reproducible independently of fitting order.  ``tree_seeds`` overrides the
    spawning (one seed per tree); ``bootstrap=False`` trains every tree on the
    full dataset, which with ``n_trees=1`` and all features reduces the forest
    to a single plain CART fit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 2 or np.unique(y).size < 2:
        raise ValueError("need at least two rows spanning both classes")
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    if n_sub_features is None:
        n_sub_features = int(np.ceil(np.sqrt(d)))
    if tree_seeds is not None:
        if len(tree_seeds) != n_trees:
            raise ValueError("tree_seeds must provide one seed per tree")
        rngs = [np.random.default_rng(s) for s in tree_seeds]
    else:
        rngs = np.random.default_rng(seed).spawn(n_trees)
    trees = []
    for rng in rngs:
        # Bootstrap indices enter _grow with multiplicity, so repeated rows
        # weight the split objective and leaf means as resampling should.
        rows = np.sort(rng.integers(0, n, size=n)) if bootstrap else np.arange(n)
        sub = None if n_sub_features >= d else n_sub_features
        trees.append(
            _grow(X, y, rows, 0, max_depth, min_leaf, sub, rng, lambda i: float(y[i].mean()))
        )
    return EnsembleModel(kind="forest", trees=tuple(trees), n_features=d)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_loss(y, p):
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def fit_gbdt(
    X,
    y,
    n_rounds: int = 200,
    max_depth: int = 4,
    learning_rate: float = 0.1,
    min_leaf: int = 1,
) -> EnsembleModel:
    """Logistic-loss boosting with Newton leaf values.

    The initial score is log(pos/neg); each round fits a regression tree to
    the residuals y - sigmoid(score) and each leaf takes the Newton step
    sum(residual) / (sum(p(1-p)) + eps).  Trees are stored unscaled; the
    shrinkage multiplies both training accumulation and prediction.
    ``loss_history[0]`` is the pre-boosting baseline loss, followed by the
    training log-loss after each round.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    pos = float(y.sum())
    if pos == 0 or pos == n:
        raise ValueError("boosting needs both classes present")
    if n_rounds < 1:
        raise ValueError("n_rounds must be positive")
    if not 0 < learning_rate:
        raise ValueError("learning_rate must be positive")
    init = float(np.log(pos / (n - pos)))
    score = np.full(n, init)
    trees = []
    history = [_log_loss(y, _sigmoid(score))]
    idx = np.arange(n)
    for _ in range(n_rounds):
        p = _sigmoid(score)
        residual = y - p
        hess = p * (1.0 - p)

        def newton(i):
            return float(residual[i].sum() / (hess[i].sum() + _HESS_EPS))

        tree = _grow(X, residual, idx, 0, max_depth, min_leaf, None, None, newton)
        trees.append(tree)
        score = score + learning_rate * predict_tree(tree, X)
        history.append(_log_loss(y, _sigmoid(score)))
    return EnsembleModel(
        kind="boosted",
        trees=tuple(trees),
        n_features=d,
        learning_rate=learning_rate,
        init_score=init,
        loss_history=tuple(history),
    )


def predict_ensemble(model: EnsembleModel, X) -> np.ndarray:
    """Positive-class score in [0, 1] per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    if model.kind == "forest":
        return np.mean([predict_tree(t, X) for t in model.trees], axis=0)
    score = model.init_score + model.learning_rate * np.sum(
        [predict_tree(t, X) for t in model.trees], axis=0
    )
    return _sigmoid(score)


# ---------------------------------------------------------------------------
# model file I/O

def _write_node(fh, node: TreeNode) -> None:
    if node.is_leaf:
        fh.write(f"node leaf {node.value!r}\n")
    else:
        fh.write(f"node split {node.feature} {node.threshold!r}\n")
        _write_node(fh, node.left)
        _write_node(fh, node.right)


def save_ensemble(model: EnsembleModel, path) -> None:
    """Text format: header lines, then one preorder node block per tree."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ensemble v1\n")
        fh.write(f"kind {model.kind}\n")
        fh.write(f"n_features {model.n_features}\n")
        fh.write(f"n_trees {len(model.trees)}\n")
        fh.write(f"learning_rate {model.learning_rate!r}\n")
        fh.write(f"init_score {model.init_score!r}\n")
        for i, tree in enumerate(model.trees):
            fh.write(f"tree {i}\n")
            _write_node(fh, tree)
        fh.write("end\n")


def _read_node(lines, path):
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise FormatError(path, "unexpected end of file inside a tree block") from None
    parts = line.split()
    if len(parts) == 3 and parts[:2] == ["node", "leaf"]:
        return TreeNode(value=float(parts[2]))
    if len(parts) == 4 and parts[:2] == ["node", "split"]:
        node = TreeNode(feature=int(parts[2]), threshold=float(parts[3]))
        node.left = _read_node(lines, path)
        node.right = _read_node(lines, path)
        return node
    raise FormatError(path, f"unrecognized node line {line!r}", line=lineno)


def load_ensemble(path) -> EnsembleModel:
    with open(path, encoding="utf-8") as fh:
        lines = iter(
            (i, ln.strip()) for i, ln in enumerate(fh.read().splitlines(), start=1) if ln.strip()
        )
        header = {}
        try:
            _, magic = next(lines)
            if magic != "ensemble v1":
                raise FormatError(path, f"bad magic line {magic!r}", line=1)
            for _ in range(5):
                lineno, line = next(lines)
                key, _, value = line.partition(" ")
                header[key] = value
            n_trees = int(header["n_trees"])
            trees = []
            for i in range(n_trees):
                lineno, line = next(lines)
                if line != f"tree {i}":
                    raise FormatError(path, f"expected 'tree {i}', got {line!r}", line=lineno)
                trees.append(_read_node(lines, path))
            lineno, line = next(lines)
            if line != "end":
                raise FormatError(path, f"expected 'end', got {line!r}", line=lineno)
        except StopIteration:
            raise FormatError(path, "truncated model file") from None
        except (KeyError, ValueError) as exc:
            raise FormatError(path, f"bad header: {exc}") from None
    return EnsembleModel(
        kind=header["kind"],
        trees=tuple(trees),
        n_features=int(header["n_features"]),
        learning_rate=float(header["learning_rate"]),
        init_score=float(header["init_score"]),
    )
