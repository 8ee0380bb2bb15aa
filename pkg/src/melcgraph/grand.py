"""Random-propagation node classifier with consistency regularization.

Training pipeline per epoch: draw S stochastic augmentations of the node
features by DropNode (whole rows zeroed with probability delta, survivors
rescaled by 1/(1-delta)), smooth each augmentation with the mixed-order
propagation mean (1/(K+1)) sum_k A_hat^k X, push each through a shared
two-layer ReLU MLP with a softmax head, and minimize

    mean_s CE(train nodes) + lambda * (1/(S n)) sum_i sum_s || p_bar'_i - p_i^(s) ||^2

where p_bar is the across-augmentation mean probability and p_bar' its
temperature-sharpened version.  The gradient is fully analytic, including the
path through the sharpening operator, so finite-difference checks agree to
first order.  Optimization is Adam with decoupled weight decay on the two
weight matrices.  Early stopping tracks validation accuracy with no drops and
the returned parameters are those of the best validation epoch.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .data import FormatError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
N_CLASSES = 2


@dataclass(frozen=True)
class GrandHyper:
    drop_rate: float = 0.45
    learning_rate: float = 0.003
    max_epochs: int = 2500
    patience: int = 100
    propagation_order: int = 4
    n_augmentations: int = 2
    consistency_weight: float = 1.0
    sharpen_temperature: float = 0.5
    hidden_width: int = 32
    input_dropout: float = 0.0
    weight_decay: float = 5e-4

    def __post_init__(self):
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must lie in [0, 1)")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ValueError("input_dropout must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")
        if self.propagation_order < 0:
            raise ValueError("propagation_order must be >= 0")
        if self.n_augmentations < 1:
            raise ValueError("n_augmentations must be >= 1")
        if self.consistency_weight < 0 or self.weight_decay < 0:
            raise ValueError("consistency_weight and weight_decay must be >= 0")
        if not 0.0 < self.sharpen_temperature <= 1.0:
            raise ValueError("sharpen_temperature must lie in (0, 1]")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be positive")


@dataclass(frozen=True)
class GrandModel:
    """Trained MLP head plus its hyperparameters and training history."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    hyper: GrandHyper
    train_loss: np.ndarray
    val_accuracy: np.ndarray
    best_epoch: int

    def __post_init__(self):
        d, h = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (h, N_CLASSES) or self.b2.shape != (N_CLASSES,):
            raise ValueError("parameter shapes are inconsistent")
        for p in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(p)):
                raise ValueError("parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]


def drop_node(X: np.ndarray, delta: float, rng) -> np.ndarray:
    """Zero whole rows with probability delta, scale survivors by 1/(1-delta).

    delta = 0 returns X itself without consuming randomness, which keeps a
    no-drop run's generator stream identical to a plain MLP run's.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if delta == 0.0:
        return X
    keep = rng.random(X.shape[0]) >= delta
    out = np.zeros_like(X)
    out[keep] = X[keep] / (1.0 - delta)
    return out


def propagate(X: np.ndarray, a_hat: sp.spmatrix, K: int) -> np.ndarray:
    """Mixed-order smoothing (1/(K+1)) sum_{k=0}^K A_hat^k X.

    Powers are never materialized; each term reuses the previous sparse
    product.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    acc = np.array(X, dtype=np.float64, copy=True)
    cur = acc.copy()
    for _ in range(K):
        cur = a_hat @ cur
        acc += cur
    return acc / (K + 1)


def _dropout_mask(shape, rate: float, rng) -> np.ndarray | None:
    if rate == 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def init_params(input_dim: int, hidden_width: int, rng) -> tuple:
    """He-scaled normal weights, zero biases; draws W1 then W2."""
    W1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, hidden_width))
    W2 = rng.normal(0.0, np.sqrt(2.0 / hidden_width), size=(hidden_width, N_CLASSES))
    return W1, np.zeros(hidden_width), W2, np.zeros(N_CLASSES)


def mlp_forward(params, X: np.ndarray) -> np.ndarray:
    """softmax(relu(X W1 + b1) W2 + b2); rows sum to 1."""
    W1, b1, W2, b2 = params
    hidden = np.maximum(X @ W1 + b1, 0.0)
    logits = hidden @ W2 + b2
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def sharpen(p: np.ndarray, temperature: float) -> np.ndarray:
    """Renormalized power p^(1/T); T < 1 pushes mass toward the argmax."""
    q = p ** (1.0 / temperature)
    return q / q.sum(axis=-1, keepdims=True)


def grand_loss(prob_list, labels, train_mask, consistency_weight, temperature) -> float:
    """Mean supervised cross-entropy plus sharpened-mean consistency penalty."""
    labels = np.asarray(labels, dtype=np.int64)
    train_mask = np.asarray(train_mask, dtype=bool)
    S = len(prob_list)
    n = prob_list[0].shape[0]
    ce = 0.0
    idx = np.nonzero(train_mask)[0]
    for p in prob_list:
        ce -= np.log(p[idx, labels[idx]]).mean()
    ce /= S
    p_bar = sum(prob_list) / S
    target = sharpen(p_bar, temperature)
    cons = sum(((target - p) ** 2).sum() for p in prob_list) / (S * n)
    return float(ce + consistency_weight * cons)


def loss_and_gradients(params, inputs, labels, train_idx, hyper):
    """Loss and parameter gradients for fixed augmentation inputs.

    ``inputs`` holds the S propagated (and input-dropout-scaled) feature
    matrices.  The consistency gradient flows through the sharpening operator
    analytically: with q = sharpen(m) the Jacobian-vector product is
    (1/T) * (q/m) * (u - sum_c u_c q_c) per row.
    """
    W1, b1, W2, b2 = params
    S = len(inputs)
    n = inputs[0].shape[0]
    lam, T = hyper.consistency_weight, hyper.sharpen_temperature

    pre_list, hid_list, probs = [], [], []
    for Xs in inputs:
        pre = Xs @ W1 + b1
        hid = np.maximum(pre, 0.0)
        logits = hid @ W2 + b2
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs.append(e / e.sum(axis=1, keepdims=True))
        pre_list.append(pre)
        hid_list.append(hid)

    ce = -sum(np.log(p[train_idx, labels[train_idx]]).mean() for p in probs) / S
    p_bar = sum(probs) / S
    target = sharpen(p_bar, T)
    cons = sum(((target - p) ** 2).sum() for p in probs) / (S * n)
    loss = ce + lam * cons

    # d loss / d p_bar via the sharpening target.
    g_target = (2.0 * lam / n) * (target - p_bar)
    inner = (g_target * target).sum(axis=1, keepdims=True)
    g_bar = (target / (T * p_bar)) * (g_target - inner)

    grads = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(W2), np.zeros_like(b2)]
    for Xs, pre, hid, p in zip(inputs, pre_list, hid_list, probs):
        g_p = g_bar / S + (2.0 * lam / (S * n)) * (p - target)
        g_p[train_idx, labels[train_idx]] -= 1.0 / (S * train_idx.size * p[train_idx, labels[train_idx]])
        g_logits = p * (g_p - (g_p * p).sum(axis=1, keepdims=True))
        grads[2] += hid.T @ g_logits
        grads[3] += g_logits.sum(axis=0)
        g_hid = (g_logits @ W2.T) * (pre > 0)
        grads[0] += Xs.T @ g_hid
        grads[1] += g_hid.sum(axis=0)
    return float(loss), grads


def _adamw_step(params, grads, state, hyper, t):
    lr, wd = hyper.learning_rate, hyper.weight_decay
    out = []
    for j, (p, g) in enumerate(zip(params, grads)):
        state["m"][j] = ADAM_BETA1 * state["m"][j] + (1 - ADAM_BETA1) * g
        state["v"][j] = ADAM_BETA2 * state["v"][j] + (1 - ADAM_BETA2) * g * g
        m_hat = state["m"][j] / (1 - ADAM_BETA1**t)
        v_hat = state["v"][j] / (1 - ADAM_BETA2**t)
        p = p - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if j in (0, 2):  # decoupled decay on weight matrices only
            p = p - lr * wd * params[j]
        out.append(p)
    return tuple(out)


def train(a_hat, X, labels, masks, hyper: GrandHyper, seed: int) -> GrandModel:
    """Fit the classifier transductively; deterministic given the seed.

    ``masks`` maps bucket names to boolean node masks; training uses the
    ``train`` labels, early stopping watches ``val`` accuracy under
    deterministic (no-drop) propagation, and the best-epoch parameters are
    returned.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_mask = np.asarray(masks["train"], dtype=bool)
    val_mask = np.asarray(masks["val"], dtype=bool)
    train_idx = np.nonzero(train_mask)[0]
    if train_idx.size == 0:
        raise ValueError("training mask selects no nodes")
    if np.unique(labels[train_idx]).size < 2:
        raise ValueError("training nodes must include both classes")
    if not val_mask.any():
        raise ValueError("validation mask selects no nodes")

    rng = np.random.default_rng(seed)
    params = init_params(X.shape[1], hyper.hidden_width, rng)
    state = {
        "m": [np.zeros_like(p) for p in params],
        "v": [np.zeros_like(p) for p in params],
    }
    x_eval = propagate(X, a_hat, hyper.propagation_order)
    val_idx = np.nonzero(val_mask)[0]

    best = (-np.inf, 0, params)
    since_improved = 0
    losses, accs = [], []
    for epoch in range(hyper.max_epochs):
        inputs = []
        for _ in range(hyper.n_augmentations):
            dropped = drop_node(X, hyper.drop_rate, rng)
            prop = propagate(dropped, a_hat, hyper.propagation_order)
            mask = _dropout_mask(prop.shape, hyper.input_dropout, rng)
            inputs.append(prop if mask is None else prop * mask)
        loss, grads = loss_and_gradients(params, inputs, labels, train_idx, hyper)
        params = _adamw_step(params, grads, state, hyper, epoch + 1)
        probs = mlp_forward(params, x_eval)
        acc = float((probs[val_idx].argmax(axis=1) == labels[val_idx]).mean())
        losses.append(loss)
        accs.append(acc)
        if acc > best[0]:
            best = (acc, epoch, params)
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= hyper.patience:
                break
    _, best_epoch, best_params = best
    return GrandModel(
        W1=best_params[0],
        b1=best_params[1],
        W2=best_params[2],
        b2=best_params[3],
        hyper=hyper,
        train_loss=np.asarray(losses),
        val_accuracy=np.asarray(accs),
        best_epoch=best_epoch,
    )


def predict(model: GrandModel, a_hat, X, K: int | None = None) -> tuple:
    """Deterministic inference: full propagation, no drops.

    Returns (probabilities, argmax labels).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {X.shape[1]}")
    if K is None:
        K = model.hyper.propagation_order
    probs = mlp_forward((model.W1, model.b1, model.W2, model.b2), propagate(X, a_hat, K))
    return probs, probs.argmax(axis=1)


# ---------------------------------------------------------------------------
# checkpoint I/O

_MAGIC = "grand-checkpoint v1"


def save_model(model: GrandModel, path) -> None:
    """Text header (hyperparameters, dimensions) + little-endian f64 blocks.

    Parameter blocks follow the header's BINARY marker in the order
    W1, b1, W2, b2.  Training history is not persisted.
    """
    head = io.StringIO()
    head.write(_MAGIC + "\n")
    head.write(f"input_dim {model.input_dim}\n")
    head.write(f"best_epoch {model.best_epoch}\n")
    for f in fields(GrandHyper):
        head.write(f"{f.name} {getattr(model.hyper, f.name)!r}\n")
    head.write("BINARY\n")
    with open(path, "wb") as fh:
        fh.write(head.getvalue().encode("utf-8"))
        for p in (model.W1, model.b1, model.W2, model.b2):
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> GrandModel:
    with open(path, "rb") as fh:
        data = fh.read()
    marker = b"BINARY\n"
    cut = data.find(marker)
    if cut < 0:
        raise FormatError(path, "missing BINARY marker")
    lines = data[:cut].decode("utf-8").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise FormatError(path, f"bad magic line, expected {_MAGIC!r}")
    kv = {}
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        kv[key] = value
    try:
        input_dim = int(kv.pop("input_dim"))
        best_epoch = int(kv.pop("best_epoch"))
        typed = {}
        for f in fields(GrandHyper):
            raw = kv.pop(f.name)
            typed[f.name] = int(raw) if f.type == "int" else float(raw)
        hyper = GrandHyper(**typed)
    except (KeyError, ValueError) as exc:
        raise FormatError(path, f"bad header: {exc}") from None
    if kv:
        raise FormatError(path, f"unknown header fields: {sorted(kv)}")
    h = hyper.hidden_width
    shapes = [(input_dim, h), (h,), (h, N_CLASSES), (N_CLASSES,)]
    need = sum(int(np.prod(s)) for s in shapes) * 8
    payload = data[cut + len(marker) :]
    if len(payload) != need:
        raise FormatError(path, f"expected {need} parameter bytes, got {len(payload)}")
    arrays, offset = [], 0
    for s in shapes:
        count = int(np.prod(s))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(s).copy())
        offset += count * 8
    return GrandModel(
        W1=arrays[0],
        b1=arrays[1],
        W2=arrays[2],
        b2=arrays[3],
        hyper=hyper,
        train_loss=np.empty(0),
        val_accuracy=np.empty(0),
        best_epoch=best_epoch,
    )
