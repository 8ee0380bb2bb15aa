"""Gaussian-process hyperparameter search with expected improvement.

The surrogate is a fixed-hyperparameter GP over parameters normalized to the
unit cube: squared-exponential kernel with length scale 0.2 and unit
amplitude, observation noise variance 1e-4, constant mean equal to the sample
mean of the observations.  Each iteration scores 1024 seeded random
candidates by expected improvement over the best observation and evaluates
the winner.  The search stops after a run of non-improving proposals or at
the evaluation budget, and returns the best configuration actually observed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import ndtr

KERNEL_LENGTH_SCALE = 0.2
NOISE_VARIANCE = 1e-4
N_INITIAL_PROBES = 8
N_CANDIDATES = 1024


@dataclass(frozen=True)
class ParamSpec:
    """One searchable parameter: continuous or integer, optionally log-scaled."""

    name: str
    lo: float
    hi: float
    integer: bool = False
    log: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo must be < hi")
        if self.log and self.lo <= 0:
            raise ValueError(f"{self.name}: log scale needs positive bounds")

    def from_unit(self, u: float):
        if self.log:
            value = self.lo * (self.hi / self.lo) ** u
        else:
            value = self.lo + u * (self.hi - self.lo)
        if self.integer:
            return int(np.clip(round(value), np.ceil(self.lo), np.floor(self.hi)))
        return float(value)


@dataclass(frozen=True)
class SearchSpace:
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise ValueError("search space must name at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    @property
    def dim(self) -> int:
        return len(self.params)

    def decode(self, u: np.ndarray) -> dict:
        return {p.name: p.from_unit(float(v)) for p, v in zip(self.params, u)}


@dataclass(frozen=True)
class SearchResult:
    best_config: dict
    best_value: float
    configs: tuple
    values: tuple

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.values))


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return (diff * diff).sum(axis=2)


def _kernel(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.exp(-_sq_dists(A, B) / (2.0 * KERNEL_LENGTH_SCALE**2))


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """EI for maximization; collapses to max(mu - best, 0) where sigma = 0."""
    gap = mu - best
    out = np.maximum(gap, 0.0)
    active = sigma > 0
    z = gap[active] / sigma[active]
    out[active] = gap[active] * ndtr(z) + sigma[active] * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    return out


def _gp_posterior(X: np.ndarray, y: np.ndarray, Xq: np.ndarray) -> tuple:
    mean = y.mean()
    K = _kernel(X, X) + NOISE_VARIANCE * np.eye(X.shape[0])
    chol = cho_factor(K, lower=True)
    Kq = _kernel(Xq, X)
    mu = mean + Kq @ cho_solve(chol, y - mean)
    v = cho_solve(chol, Kq.T)
    var = 1.0 - np.einsum("qn,nq->q", Kq, v)
    return mu, np.sqrt(np.clip(var, 0.0, None))


def bayes_opt(
    objective,
    space: SearchSpace,
    patience: int = 50,
    max_evals: int = 200,
    seed: int = 0,
) -> SearchResult:
    """Maximize ``objective(config)``; returns the best evaluated config.

    Starts with 8 random probes, then proposes the EI argmax over 1024 fresh
    random candidates per iteration.  A proposal that fails to improve the
    best observed value increments the stall counter; ``patience`` consecutive
    stalls end the search (a constant objective therefore costs exactly
    8 + patience evaluations when the budget allows).
    """
    if patience < 1 or max_evals < 1:
        raise ValueError("patience and max_evals must be positive")
    rng = np.random.default_rng(seed)
    X: list = []
    values: list = []
    configs: list = []

    def evaluate(u: np.ndarray) -> float:
        config = space.decode(u)
        value = float(objective(config))
        X.append(u)
        configs.append(config)
        values.append(value)
        return value

    for _ in range(min(N_INITIAL_PROBES, max_evals)):
        evaluate(rng.random(space.dim))

    stalls = 0
    while len(values) < max_evals and stalls < patience:
        best = max(values)
        candidates = rng.random((N_CANDIDATES, space.dim))
        mu, sigma = _gp_posterior(np.asarray(X), np.asarray(values), candidates)
        value = evaluate(candidates[int(np.argmax(expected_improvement(mu, sigma, best)))])
        if value > best:
            stalls = 0
        else:
            stalls += 1

    best_idx = int(np.argmax(values))
    return SearchResult(
        best_config=configs[best_idx],
        best_value=values[best_idx],
        configs=tuple(configs),
        values=tuple(values),
    )
