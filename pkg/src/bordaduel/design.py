"""G-optimal design over item pairs.

A design is a distribution over ordered pairs ``(i, j)``. Its information
matrix is ``V(pi) = sum pi(i, j) phi phi^T`` and its G-value is the largest
``||phi||^2_{V(pi)^{-1}}`` over pairs with a nonzero feature. The optimum
equals the dimension of the feature span, so rank-deficient feature sets are
handled in an orthonormal basis of that span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .model import FeatureSet

PRUNE_THRESHOLD = 1e-7


class DegenerateFeatures(ValueError):
    """Every pair feature is zero, so no design carries information."""


@dataclass
class Design:
    """Weights over ordered pairs, stored as ``{(i, j): weight}`` for positive weights."""

    weights: dict

    def __post_init__(self):
        clean = {}
        for (i, j), w in self.weights.items():
            w = float(w)
            if w < 0:
                raise ValueError(f"negative weight {w} on pair {(i, j)}")
            if w > 0:
                clean[(int(i), int(j))] = w
        if not clean:
            raise ValueError("design has empty support")
        total = math.fsum(clean.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"design weights sum to {total}, not 1")
        self.weights = dict(sorted(clean.items()))

    @property
    def support(self) -> list:
        return list(self.weights)

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, pairs) -> "Design":
        pairs = list(pairs)
        return cls({p: 1.0 / len(pairs) for p in pairs})

    def to_array(self, K: int) -> np.ndarray:
        pi = np.zeros((K, K))
        for (i, j), w in self.weights.items():
            pi[i, j] = w
        return pi


def info_matrix(design: Design, features: FeatureSet) -> np.ndarray:
    pairs = design.support
    X = np.array([features.phi[p] for p in pairs])
    w = np.array([design.weights[p] for p in pairs])
    return linalg.gram(X, w)


def _nonzero_mask(features: FeatureSet) -> np.ndarray:
    return np.any(features.flat() != 0.0, axis=1)


def g_value(design: Design, features: FeatureSet) -> float:
    """``max ||phi||^2_{V^{-1}}`` over pairs with nonzero feature, in the feature span."""
    U = features.span()
    if U.shape[1] == 0:
        raise DegenerateFeatures("all pair features are zero")
    V = U.T @ info_matrix(design, features) @ U
    X = features.flat()[_nonzero_mask(features)] @ U
    return float(linalg.weighted_norms_sq(X, linalg.symmetrize(V)).max())


@dataclass
class FrankWolfeResult:
    design: Design
    g: float
    d_eff: int
    g_path: list = field(repr=False)
    logdet_path: list = field(repr=False)
    best_iteration: int = 0


def _prune(pi: np.ndarray, threshold: float) -> np.ndarray:
    pi = np.where(pi < threshold, 0.0, pi)
    return pi / pi.sum()


def frank_wolfe(features: FeatureSet, iterations: int = 20, prune_threshold: float = PRUNE_THRESHOLD) -> FrankWolfeResult:
    """Approximate G-optimal design by Frank-Wolfe (Fedorov-Wynn) steps.

    Starts from the uniform design over pairs with nonzero feature. Each step
    moves mass ``gamma = (g/d - 1)/(g - 1)`` onto the pair with the largest
    ``||phi||^2_{V^{-1}}``, ties broken by lowest ``(i, j)``; this step
    maximizes ``log det V`` along the segment, so the log-determinant never
    decreases. The G-value of individual iterates can wobble, so the pruned
    iterate with the smallest G-value seen is returned.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    U = features.span()
    d = U.shape[1]
    if d == 0:
        raise DegenerateFeatures("all pair features are zero")
    K = features.K
    mask = _nonzero_mask(features)
    idx = np.flatnonzero(mask)
    X = features.flat()[idx] @ U
    pi = np.full(idx.size, 1.0 / idx.size)

    def evaluate(weights):
        V = linalg.gram(X, weights)
        return linalg.weighted_norms_sq(X, V), V

    best_pi, best_g, best_it = None, math.inf, 0
    g_path, logdet_path = [], []
    for r in range(iterations + 1):
        norms, V = evaluate(pi)
        logdet_path.append(float(np.linalg.slogdet(V)[1]))
        g = float(norms.max())
        g_path.append(g)
        pruned = _prune(pi, prune_threshold)
        g_pruned = g if np.array_equal(pruned, pi) else float(evaluate(pruned)[0].max())
        if g_pruned < best_g:
            best_pi, best_g, best_it = pruned, g_pruned, r
        if r == iterations or g <= d * (1.0 + 1e-12):
            break
        k = int(np.argmax(norms))
        gamma = (g / d - 1.0) / (g - 1.0)
        pi = (1.0 - gamma) * pi
        pi[k] += gamma

    pairs = [divmod(int(p), K) for p in idx]
    weights = {pairs[n]: float(best_pi[n]) for n in np.flatnonzero(best_pi)}
    design = Design(weights)
    return FrankWolfeResult(design, best_g, d, g_path, logdet_path, best_it)


def frank_wolfe_design(features: FeatureSet, iterations: int = 20) -> Design:
    return frank_wolfe(features, iterations).design


def listing_step(g_unsquared: float, d: int) -> float:
    """Step printed in the original listing: ``(g - 1/d)/(g - 1)`` on an unsquared norm.

    Kept for comparison only. It exceeds 1 whenever ``1 < g`` and so cannot be
    used as a convex-combination weight near the optimum.
    """
    return (g_unsquared - 1.0 / d) / (g_unsquared - 1.0)


def allocation(design: Design, d_eff: int, epsilon: float) -> dict:
    """Sample counts ``ceil(d_eff * pi(i, j) / epsilon^2)`` for every support pair."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    scale = d_eff / epsilon**2
    return {p: max(1, math.ceil(scale * w)) for p, w in design.weights.items()}
