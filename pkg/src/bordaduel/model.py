"""Preference models for contextual dueling bandits and Borda-regret accounting.

Items are indexed ``0..K-1``. Every ordered pair ``(i, j)`` carries a feature
vector ``phi[i, j]`` with ``phi[i, j] == -phi[j, i]``, and the probability that
``i`` beats ``j`` is ``mu(<phi[i, j], theta>)`` for a link ``mu`` satisfying
``mu(x) + mu(-x) = 1``. The Borda score of ``i`` is its mean win probability
against a uniformly drawn opponent, the diagonal ``p[i, i] = 1/2`` included.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg

FEATURE_NORM_TOL = 1e-12
PROB_TOL = 1e-12


class LinkKind(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class LinkFunction:
    """Link ``mu`` with its derivative bounds.

    ``kappa`` is the configured lower bound on ``mu'`` near the true parameter;
    ``None`` lets the environment derive it from its own features.
    """

    kind: LinkKind
    L_mu: float
    M_mu: float
    kappa: float | None = None

    @classmethod
    def linear(cls, kappa: float | None = None) -> "LinkFunction":
        return cls(LinkKind.LINEAR, 1.0, 0.0, kappa)

    @classmethod
    def logistic(cls, kappa: float | None = None) -> "LinkFunction":
        return cls(LinkKind.LOGISTIC, 0.25, 0.25, kappa)

    @classmethod
    def from_name(cls, name: str, kappa: float | None = None) -> "LinkFunction":
        kind = LinkKind(name.lower())
        return cls.linear(kappa) if kind is LinkKind.LINEAR else cls.logistic(kappa)

    def mu(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is LinkKind.LINEAR:
            return 0.5 + x
        # both branches are exact mirrors, so mu(x) + mu(-x) == 1 holds to rounding
        e = np.exp(-np.abs(x))
        return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def dmu(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is LinkKind.LINEAR:
            return np.ones_like(x)
        s = self.mu(x)
        return s * (1.0 - s)

    def log_partition(self, x):
        """``m(x)`` with ``m' = mu``; the GLM log-likelihood is ``r x - m(x)``."""
        x = np.asarray(x, dtype=float)
        if self.kind is LinkKind.LINEAR:
            return 0.5 * x + 0.5 * x * x
        return np.logaddexp(0.0, x)


class FeatureSet:
    """Pairwise feature table ``phi`` of shape (K, K, d).

    Validated on construction: exact antisymmetry and ``||phi[i, j]|| <= 1``.
    The array is made read-only.
    """

    def __init__(self, phi):
        phi = np.array(phi, dtype=float)
        if phi.ndim != 3 or phi.shape[0] != phi.shape[1]:
            raise ValueError(f"phi must have shape (K, K, d), got {phi.shape}")
        if phi.shape[0] < 1 or phi.shape[2] < 1:
            raise ValueError("need K >= 1 items and d >= 1 dimensions")
        if not np.array_equal(phi, -phi.transpose(1, 0, 2)):
            raise ValueError("features are not antisymmetric: phi[i, j] != -phi[j, i]")
        norms = np.linalg.norm(phi, axis=2)
        if norms.max() > 1.0 + FEATURE_NORM_TOL:
            raise ValueError(f"feature norm {norms.max():.6g} exceeds 1")
        phi.setflags(write=False)
        self.phi = phi
        self.K = phi.shape[0]
        self.d = phi.shape[2]

    @classmethod
    def from_upper(cls, K: int, vectors: dict) -> "FeatureSet":
        """Build from ``{(i, j): vector}`` for ``i < j``; the rest is implied."""
        d = len(next(iter(vectors.values())))
        phi = np.zeros((K, K, d))
        for (i, j), v in vectors.items():
            if not i < j:
                raise ValueError(f"expected i < j, got {(i, j)}")
            phi[i, j] = v
            phi[j, i] = -phi[i, j]
        return cls(phi)

    def flat(self) -> np.ndarray:
        """All K*K vectors as rows, ordered lexicographically by (i, j)."""
        return self.phi.reshape(-1, self.d)

    def mean_rows(self) -> np.ndarray:
        """``(1/K) sum_j phi[i, j]`` for each ``i``; shape (K, d)."""
        return self.phi.mean(axis=1)

    def second_moment(self) -> np.ndarray:
        """``(1/K^2) sum_{i,j} phi phi^T``."""
        return linalg.gram(self.flat()) / self.K**2

    def lambda0(self) -> float:
        return max(linalg.min_eigenvalue(self.second_moment()), 0.0)

    def span(self) -> np.ndarray:
        """Orthonormal basis (d, d_eff) of the span of all features."""
        return linalg.span_basis(self.flat())

    def effective_dim(self) -> int:
        return self.span().shape[1]

    def lambda0_in_span(self) -> float:
        """Smallest eigenvalue of the second moment restricted to the feature span.

        Equals ``lambda0`` for full-rank feature sets and stays positive for
        rank-deficient ones (0.0 if every feature is zero).
        """
        U = self.span()
        if U.shape[1] == 0:
            return 0.0
        return max(linalg.min_eigenvalue(linalg.symmetrize(U.T @ self.second_moment() @ U)), 0.0)

    def __repr__(self) -> str:
        return f"FeatureSet(K={self.K}, d={self.d})"


def _check_item(K: int, *items: int) -> None:
    for i in items:
        if not 0 <= i < K:
            raise IndexError(f"item index {i} out of range for K={K}")


def _validate_probs(P: np.ndarray) -> None:
    if P.min() < -PROB_TOL or P.max() > 1.0 + PROB_TOL:
        raise ValueError(f"preference probabilities leave [0, 1]: range [{P.min():.6g}, {P.max():.6g}]")


class StochasticEnv:
    """Fixed preference model ``p[i, j] = mu(<phi[i, j], theta_star>)``.

    The preference matrix, Borda scores and winner are computed once.
    ``meta`` carries free-form provenance (e.g. hard-instance parameters).
    """

    def __init__(self, features: FeatureSet, link: LinkFunction, theta_star, meta: dict | None = None):
        theta_star = np.array(theta_star, dtype=float).reshape(-1)
        if theta_star.shape != (features.d,):
            raise ValueError(f"theta_star has dimension {theta_star.size}, features have {features.d}")
        theta_star.setflags(write=False)
        self.features = features
        self.link = link
        self.theta_star = theta_star
        self.meta = dict(meta or {})
        P = link.mu(features.phi @ theta_star)
        _validate_probs(P)
        P = np.clip(P, 0.0, 1.0)
        P.setflags(write=False)
        self.P = P
        B = P.mean(axis=1)
        B.setflags(write=False)
        self.borda = B
        self.winner = int(np.argmax(B))

    @property
    def K(self) -> int:
        return self.features.K

    @property
    def d(self) -> int:
        return self.features.d

    @property
    def kappa(self) -> float:
        """Configured kappa, else ``mu'`` at the largest reachable ``|<phi, theta>|``.

        Reachable means ``||theta - theta_star|| <= 1``, so the bound is
        ``max |<phi, theta_star>| + ||phi||`` over all pairs.
        """
        if self.link.kappa is not None:
            return self.link.kappa
        if self.link.kind is LinkKind.LINEAR:
            return 1.0
        phi = self.features.flat()
        S = float(np.max(np.abs(phi @ self.theta_star) + np.linalg.norm(phi, axis=1)))
        return float(self.link.dmu(S))

    def preference_prob(self, i: int, j: int, t: int = 1) -> float:
        _check_item(self.K, i, j)
        return float(self.P[i, j])

    def borda_scores(self, t: int = 1) -> np.ndarray:
        return self.borda

    def regret(self, t: int, i: int, j: int) -> float:
        B = self.borda
        return 2.0 * B[self.winner] - B[i] - B[j]

    def __repr__(self) -> str:
        return f"StochasticEnv(K={self.K}, d={self.d}, link={self.link.kind.value})"


class AdversarialEnv:
    """Linear preference model whose parameter moves every round.

    ``schedule(t)`` returns ``theta_t`` for rounds ``t = 1..T``. All parameters
    are materialized at construction so the environment is immutable and
    ``p_t[i, j] = 1/2 + <phi[i, j], theta_t>`` can be checked against [0, 1].
    The Borda winner maximizes the Borda score summed over the horizon.
    """

    def __init__(self, features: FeatureSet, schedule: Callable[[int], np.ndarray], T: int):
        if T < 1:
            raise ValueError("horizon must be at least 1")
        thetas = np.array([np.asarray(schedule(t), dtype=float).reshape(-1) for t in range(1, T + 1)])
        if thetas.shape != (T, features.d):
            raise ValueError(f"schedule must return vectors of dimension {features.d}")
        thetas.setflags(write=False)
        self.features = features
        self.link = LinkFunction.linear()
        self.thetas = thetas
        self.T = T
        phi = features.flat()
        extent = np.abs(phi @ thetas.T).max()
        if extent > 0.5 + PROB_TOL:
            raise ValueError(f"preference probabilities leave [0, 1] (max |<phi, theta_t>| = {extent:.6g})")
        # B_t(i) = 1/2 + <mean_j phi[i, j], theta_t>
        self._mean_rows = features.mean_rows()
        total = T / 2.0 + self._mean_rows @ thetas.sum(axis=0)
        self.winner = int(np.argmax(total))

    @property
    def K(self) -> int:
        return self.features.K

    @property
    def d(self) -> int:
        return self.features.d

    def theta_at(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise IndexError(f"round {t} outside 1..{self.T}")
        return self.thetas[t - 1]

    def preference_prob(self, i: int, j: int, t: int) -> float:
        _check_item(self.K, i, j)
        x = float(self.features.phi[i, j] @ self.theta_at(t))
        return min(max(0.5 + x, 0.0), 1.0)

    def borda_scores(self, t: int) -> np.ndarray:
        return 0.5 + self._mean_rows @ self.theta_at(t)

    def regret(self, t: int, i: int, j: int) -> float:
        B = self.borda_scores(t)
        return float(2.0 * B[self.winner] - B[i] - B[j])

    def __repr__(self) -> str:
        return f"AdversarialEnv(K={self.K}, d={self.d}, T={self.T})"


def preference_prob(env, i: int, j: int, t: int = 1) -> float:
    return env.preference_prob(i, j, t)


def borda_scores(env, t: int = 1) -> np.ndarray:
    return np.asarray(env.borda_scores(t))


def sample_duel(env, i: int, j: int, t: int, rng: np.random.Generator) -> int:
    """Bernoulli duel outcome: 1 if ``i`` beats ``j``. One uniform draw per call."""
    return int(rng.random() < env.preference_prob(i, j, t))


@dataclass
class RegretTrace:
    """Per-round Borda regret of one run, stored densely.

    ``cumulative`` is recomputed as the prefix sum of ``per_round``.
    """

    T: int
    algorithm_id: str = ""
    seed: int | None = None
    per_round: np.ndarray = field(init=False, repr=False)
    rounds_recorded: int = field(default=0, init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon must be at least 1")
        self.per_round = np.zeros(self.T)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_round[: self.rounds_recorded])

    @property
    def final(self) -> float:
        return float(self.cumulative[-1]) if self.rounds_recorded else 0.0


def record_step(trace: RegretTrace, env, t: int, i: int, j: int) -> RegretTrace:
    """Append the round-``t`` regret ``2 B_t(i*) - B_t(i) - B_t(j)``.

    Rounds must be recorded in order ``1, 2, ...``.
    """
    if t != trace.rounds_recorded + 1:
        raise ValueError(f"expected round {trace.rounds_recorded + 1}, got {t}")
    trace.per_round[t - 1] = env.regret(t, i, j)
    trace.rounds_recorded = t
    return trace
