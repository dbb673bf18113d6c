"""Environment constructors: the two-block hard family, random GLMs, and
environments fitted from observed pairwise win counts."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .estimation import SampleLog, mle_glm
from .model import FeatureSet, LinkFunction, StochasticEnv


def bit_vector(x: int, d: int) -> np.ndarray:
    """Shifted bit representation ``2b - 1`` of ``x``, least significant bit first."""
    if d < 1:
        raise ValueError("d must be positive")
    if not 0 <= x < 2**d:
        raise ValueError(f"x={x} out of range for {d} bits")
    return np.array([1.0 if (x >> k) & 1 else -1.0 for k in range(d)])


@dataclass(frozen=True)
class HardInstanceSpec:
    """Parameters of one member of the hard family.

    ``d_core`` is the construction dimension; the environment itself lives in
    ``d_core + 1`` dimensions because of the appended bias coordinate.
    """

    d_core: int
    delta: float
    theta_signs: tuple

    def __post_init__(self):
        if self.d_core < 1:
            raise ValueError("d_core must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        signs = tuple(int(s) for s in self.theta_signs)
        if len(signs) != self.d_core or any(s not in (-1, 1) for s in signs):
            raise ValueError(f"theta_signs must be {self.d_core} entries in {{-1, +1}}")
        object.__setattr__(self, "theta_signs", signs)
        load = self.d_core * self.delta
        if load > 0.25:
            raise ValueError(f"d_core * delta = {load:.6g} > 1/4 puts probabilities outside [0, 1]")
        if load > 0.125:
            warnings.warn(
                f"d_core * delta = {load:.6g} exceeds 1/8; probabilities stay in [0, 1] "
                "but the lower-bound construction assumes d_core * delta <= 1/8",
                stacklevel=3,
            )

    @property
    def theta(self) -> np.ndarray:
        return self.delta * np.array(self.theta_signs, dtype=float)

    @classmethod
    def random(cls, d_core: int, rng: np.random.Generator, delta: float | None = None) -> "HardInstanceSpec":
        """Random sign pattern; ``delta`` defaults to ``1 / (4 d_core)``."""
        if delta is None:
            delta = 1.0 / (4 * d_core)
        signs = tuple(int(s) for s in rng.choice([-1, 1], size=d_core))
        return cls(d_core, delta, signs)


def hard_block_constants(d_core: int) -> np.ndarray:
    """Sign of the bias coordinate: +1 good-vs-bad, -1 bad-vs-good, 0 within a block."""
    K = 2 ** (d_core + 1)
    good = np.arange(K) < 2**d_core
    return good[:, None].astype(float) - good[None, :].astype(float)


def make_hard_instance(spec: HardInstanceSpec) -> StochasticEnv:
    """Linear-link environment with ``K = 2**(d_core+1)`` items in ``d_core + 1`` dims.

    Good items are ``0..2**d_core - 1``. Features are ``(phi, c) / sqrt(d_core+1)``
    and the parameter is ``(theta, 1/4) * sqrt(d_core+1)``, so
    ``<phi~, theta~> = c/4 + <phi, theta>`` with ``c`` in {-1, 0, +1}.
    """
    d = spec.d_core
    K = 2 ** (d + 1)
    half = 2**d
    bits = np.array([bit_vector(x, d) for x in range(half)])
    core = np.zeros((K, K, d))
    core[:half, half:] = bits[:, None, :]
    core[half:, :half] = -bits[None, :, :]
    c = hard_block_constants(d)
    scale = math.sqrt(d + 1)
    phi = np.concatenate([core, c[:, :, None]], axis=2) / scale
    theta = np.append(spec.theta, 0.25) * scale
    meta = {
        "kind": "hard-instance",
        "d_core": d,
        "ambient_dim": d + 1,
        "delta": spec.delta,
        "theta_signs": list(spec.theta_signs),
    }
    return StochasticEnv(FeatureSet(phi), LinkFunction.linear(), theta, meta=meta)


def hard_instance_borda(spec: HardInstanceSpec) -> np.ndarray:
    """Closed-form Borda scores: ``5/8 + <bit(i), theta>/2`` for good items, 3/8 for bad."""
    half = 2**spec.d_core
    good = np.array([0.625 + 0.5 * bit_vector(x, spec.d_core) @ spec.theta for x in range(half)])
    return np.concatenate([good, np.full(half, 0.375)])


def hard_instance_winner(spec: HardInstanceSpec) -> int:
    """The item whose bit pattern equals the sign pattern of theta."""
    return sum(1 << k for k, s in enumerate(spec.theta_signs) if s > 0)


def make_random_glm(K: int, d: int, link: LinkFunction, rng: np.random.Generator) -> StochasticEnv:
    """Random unit-norm antisymmetric features and a parameter scaled so ``|<phi, theta>| <= 0.45``.

    The scaling keeps every linear-link probability in [0.05, 0.95]; the same
    parameter is used for other links, whose probabilities then lie closer to 1/2.
    """
    if K < 2 or d < 1:
        raise ValueError("need K >= 2 and d >= 1")
    if d > K * (K - 1) // 2:
        warnings.warn(f"d={d} exceeds the {K * (K - 1) // 2} distinct pairs; lambda0 will be 0", stacklevel=2)
    iu = np.triu_indices(K, 1)
    v = rng.standard_normal((len(iu[0]), d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    phi = np.zeros((K, K, d))
    phi[iu] = v
    phi[iu[1], iu[0]] = -v
    theta = rng.standard_normal(d)
    extent = np.abs(v @ theta).max()
    theta *= 0.45 / extent
    meta = {"kind": "random-glm", "K": K, "d": d}
    return StochasticEnv(FeatureSet(phi), link, theta, meta=meta)


def lambda0(features: FeatureSet) -> float:
    return features.lambda0()


class EmptyPairWarning(UserWarning):
    """Some item pairs have no recorded comparisons."""


@dataclass
class EmpiricalCounts:
    """``wins[i, j]`` = number of times item ``i`` beat item ``j``."""

    wins: np.ndarray

    def __post_init__(self):
        w = np.array(self.wins, dtype=np.int64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"wins must be square, got shape {w.shape}")
        if (w < 0).any():
            raise ValueError("wins must be nonnegative")
        if np.diag(w).any():
            raise ValueError("an item cannot beat itself: wins[i, i] must be 0")
        self.wins = w

    @property
    def K(self) -> int:
        return self.wins.shape[0]

    @property
    def totals(self) -> np.ndarray:
        return self.wins + self.wins.T

    def empirical_prob(self, i: int, j: int) -> Fraction | None:
        n = int(self.wins[i, j] + self.wins[j, i])
        return Fraction(int(self.wins[i, j]), n) if n else None

    @classmethod
    def from_csv(cls, path, K: int | None = None) -> "EmpiricalCounts":
        """Read ``i,j,wins`` rows (0-based items); duplicate rows are summed."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["i", "j", "wins"]:
                raise ValueError(f"{path}: expected header 'i,j,wins', got {reader.fieldnames}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    i, j, w = int(row["i"]), int(row["j"]), int(row["wins"])
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed row {row}") from exc
                if i < 0 or j < 0 or w < 0:
                    raise ValueError(f"{path}:{lineno}: negative entry")
                rows.append((i, j, w))
        size = max([K or 0] + [max(i, j) + 1 for i, j, _ in rows])
        wins = np.zeros((size, size), dtype=np.int64)
        for i, j, w in rows:
            wins[i, j] += w
        return cls(wins)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["i", "j", "wins"])
            for i, j in zip(*np.nonzero(self.totals)):
                out.writerow([int(i), int(j), int(self.wins[i, j])])


@dataclass
class FitReport:
    max_abs_error: float
    n_groups: int
    groups: dict = field(repr=False)
    empty_pairs: list
    theta: np.ndarray
    converged: bool
    score_residual: float

    def to_json(self) -> dict:
        return {
            "max_abs_error": self.max_abs_error,
            "n_groups": self.n_groups,
            "empty_pairs": [list(p) for p in self.empty_pairs],
            "theta": [float(x) for x in self.theta],
            "converged": self.converged,
            "score_residual": self.score_residual,
        }


def _sign_codebook(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` random sign vectors, distinct up to negation while the codebook allows."""
    classes = 2 ** (d - 1)
    if count <= classes:
        picks = rng.choice(classes, size=count, replace=False)
    else:
        picks = rng.integers(0, classes, size=count)
    # class c: bits of c on the first d-1 coordinates, last coordinate fixed at +1
    vecs = np.array([np.append(bit_vector(int(c), d - 1), 1.0) if d > 1 else [1.0] for c in picks])
    flips = rng.choice([-1.0, 1.0], size=(count, 1))
    return (vecs * flips).reshape(count, d)


def fit_env_from_counts(
    counts: EmpiricalCounts,
    d_ctx: int,
    rng: np.random.Generator,
    mle_iterations: int = 100,
    link: LinkFunction | None = None,
) -> tuple[StochasticEnv, FitReport]:
    """Build a logistic GLM environment that reproduces observed win rates.

    Ordered pairs are grouped by their exact empirical win rate; each group
    shares one random sign vector scaled to unit norm, mirrored groups
    (rate ``1 - v``) get its negation and the rate-1/2 group gets the zero
    vector. The parameter is the count-weighted logistic MLE. Pairs with no
    comparisons get the zero vector and are left out of the fit.
    """
    if d_ctx < 1:
        raise ValueError("d_ctx must be positive")
    link = link or LinkFunction.logistic()
    K = counts.K
    rates: dict[tuple[int, int], Fraction] = {}
    empty = []
    for i in range(K):
        for j in range(i + 1, K):
            p = counts.empirical_prob(i, j)
            if p is None:
                empty.append((i, j))
            else:
                rates[(i, j)] = p
                rates[(j, i)] = 1 - p
    if empty:
        warnings.warn(f"{len(empty)} pair(s) have no comparisons and are excluded from the fit", EmptyPairWarning, stacklevel=2)
    if not rates:
        raise ValueError("no pair has any comparisons")

    half = Fraction(1, 2)
    upper_values = sorted({v for v in rates.values() if v > half})
    groups: dict[Fraction, list] = {}
    for pair, v in sorted(rates.items()):
        groups.setdefault(v, []).append(pair)

    codebook = _sign_codebook(d_ctx, len(upper_values), rng) / math.sqrt(d_ctx)
    vector_of = {half: np.zeros(d_ctx)}
    for v, vec in zip(upper_values, codebook):
        vector_of[v] = vec
        vector_of[1 - v] = -vec

    phi = np.zeros((K, K, d_ctx))
    for pair, v in rates.items():
        phi[pair] = vector_of[v]
    features = FeatureSet(phi)

    # one weighted sample per ordered pair with i < j carries all its comparisons
    pairs = sorted(p for p in rates if p[0] < p[1])
    totals = counts.totals
    samples = SampleLog(
        phi=np.array([phi[p] for p in pairs]),
        r=np.array([float(rates[p]) for p in pairs]),
        weight=np.array([float(totals[p]) for p in pairs]),
    )
    fit = mle_glm(samples, link, iterations=mle_iterations)
    env = StochasticEnv(features, link, fit.theta, meta={"kind": "from-counts", "K": K, "d": d_ctx})
    err = max(abs(float(env.P[p]) - float(v)) for p, v in rates.items())
    report = FitReport(
        max_abs_error=err,
        n_groups=len(groups),
        groups={str(v): members for v, members in groups.items()},
        empty_pairs=empty,
        theta=fit.theta,
        converged=fit.converged,
        score_residual=fit.residual,
    )
    return env, report


def load_counts(path) -> EmpiricalCounts:
    return EmpiricalCounts.from_csv(Path(path))
