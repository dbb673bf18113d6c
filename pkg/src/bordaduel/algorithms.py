"""Dueling-bandit agents for Borda regret.

Every agent exposes ``select_pair(t) -> (i, j)`` and ``observe(t, i, j, r)``
and draws its own randomness from a generator it owns, so a run is fully
determined by the environment, the configuration and two seeds (one for the
agent, one for the duel outcomes).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .design import allocation, frank_wolfe
from .estimation import SampleLog, estimate_borda, mle_glm
from .model import FeatureSet, LinkFunction, RegretTrace, record_step


class HorizonTooSmall(UserWarning):
    """Exploration did not fit in the horizon; the agent never committed."""


class Agent:
    id = "agent"

    def select_pair(self, t: int) -> tuple[int, int]:
        raise NotImplementedError

    def observe(self, t: int, i: int, j: int, r: int) -> None:
        raise NotImplementedError

    def summary(self) -> dict:
        return {}


def run_agent(env, agent: Agent, T: int, env_rng: np.random.Generator, seed=None) -> RegretTrace:
    """Play ``T`` rounds of ``agent`` against ``env`` and record Borda regret.

    Duel outcomes use one uniform from ``env_rng`` per round; the uniforms are
    drawn up front in a single block.
    """
    trace = RegretTrace(T, algorithm_id=agent.id, seed=seed)
    u = env_rng.random(T)
    for t in range(1, T + 1):
        i, j = agent.select_pair(t)
        r = int(u[t - 1] < env.preference_prob(i, j, t))
        record_step(trace, env, t, i, j)
        agent.observe(t, i, j, r)
    return trace


# --------------------------------------------------------------------------
# BETC-GLM
# --------------------------------------------------------------------------


class Regime(str, enum.Enum):
    MATCHING = "matching"
    FEWER_ARMS = "fewer-arms"


def betc_params(
    regime: Regime | str,
    T: int,
    K: int,
    d_eff: int,
    delta: float,
    lambda0: float,
    C4: float = 1.0,
) -> tuple[int, float]:
    """Exploration length and design accuracy ``(tau, epsilon)`` for a regime.

    matching:   tau = C4 lambda0^-2 (d + log(1/delta)),  epsilon = d^(1/6) T^(-1/3)
    fewer-arms: tau = (d log(K/delta))^(1/3) T^(2/3),
                epsilon = d^(1/3) T^(-1/3) log(3K^2/delta)^(-1/6)
    """
    regime = Regime(regime)
    if T < 1 or K < 1 or d_eff < 1:
        raise ValueError("T, K and d_eff must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if regime is Regime.MATCHING:
        if not lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        tau = C4 * (d_eff + math.log(1 / delta)) / lambda0**2
        eps = d_eff ** (1 / 6) * T ** (-1 / 3)
    else:
        tau = (d_eff * math.log(K / delta)) ** (1 / 3) * T ** (2 / 3)
        eps = d_eff ** (1 / 3) * T ** (-1 / 3) * math.log(3 * K**2 / delta) ** (-1 / 6)
    # guard against 2082.0000000001 style round-up
    return int(math.ceil(round(tau, 9))), eps


@dataclass
class BetcConfig:
    """Settings for BETC-GLM. ``tau``/``epsilon`` left as None come from the regime."""

    T: int
    tau: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    regime: Regime = Regime.MATCHING
    fw_iterations: int = 20
    mle_iterations: int = 100
    C4: float = 1.0

    def __post_init__(self):
        self.regime = Regime(self.regime)
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.delta is None:
            self.delta = 1.0 / max(self.T, 2)
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


class BetcGlm(Agent):
    """Explore uniformly for ``tau`` rounds, then follow a G-optimal design for
    ``N`` rounds, fit the MLE and commit to ``(i_hat, i_hat)``.

    When ``tau + N > T`` the exploration is cut at ``T`` and ``committed``
    stays False.
    """

    id = "betc-glm"

    def __init__(self, features: FeatureSet, link: LinkFunction, config: BetcConfig, rng: np.random.Generator):
        self.features = features
        self.link = link
        self.config = config
        self.rng = rng
        self.K = features.K
        self.d_eff = features.effective_dim()
        T = config.T

        if self.d_eff == 0:
            # no pair carries information: every item has Borda score 1/2
            tau, eps, schedule = 0, config.epsilon, []
        else:
            tau, eps = config.tau, config.epsilon
            if tau is None or eps is None:
                auto_tau, auto_eps = betc_params(
                    config.regime, T, self.K, self.d_eff, config.delta, features.lambda0_in_span(), config.C4
                )
                tau = auto_tau if tau is None else tau
                eps = auto_eps if eps is None else eps
            fw = frank_wolfe(features, config.fw_iterations)
            self.design = fw.design
            self.design_g = fw.g
            counts = allocation(fw.design, self.d_eff, eps)
            schedule = [pair for pair, n in counts.items() for _ in range(n)]
        self.tau = tau
        self.epsilon = eps
        self.N = len(schedule)
        self._schedule = schedule
        self.explore_end = tau + self.N
        self.no_commit = self.explore_end > T
        if self.no_commit:
            warnings.warn(
                f"tau + N = {self.explore_end} exceeds T = {T}; exploring for the whole horizon",
                HorizonTooSmall,
                stacklevel=2,
            )
        n_obs = min(self.explore_end, T)
        self._pairs = np.zeros((n_obs, 2), dtype=np.int64)
        self._r = np.zeros(n_obs)
        self._n = 0
        self.theta_hat = None
        self.i_hat = None
        self.fit = None

    @property
    def committed(self) -> bool:
        return self.i_hat is not None

    def select_pair(self, t: int) -> tuple[int, int]:
        if t <= self.tau:
            i, j = self.rng.integers(0, self.K, size=2)
            return int(i), int(j)
        if t <= self.explore_end:
            return self._schedule[t - self.tau - 1]
        if self.i_hat is None:
            self._commit()
        return self.i_hat, self.i_hat

    def observe(self, t: int, i: int, j: int, r: int) -> None:
        if t <= self.explore_end:
            self._pairs[self._n] = (i, j)
            self._r[self._n] = r
            self._n += 1

    def _commit(self) -> None:
        pairs = self._pairs[: self._n]
        phi = self.features.phi[pairs[:, 0], pairs[:, 1]]
        keep = np.any(phi != 0.0, axis=1)
        if not keep.any():
            theta = np.zeros(self.features.d)
        else:
            samples = SampleLog(phi[keep], self._r[: self._n][keep])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self.fit = mle_glm(samples, self.link, iterations=self.config.mle_iterations)
            theta = self.fit.theta
        self.theta_hat = theta
        self.borda_hat = estimate_borda(theta, self.features, self.link)
        self.i_hat = int(np.argmax(self.borda_hat))

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "N": self.N,
            "epsilon": self.epsilon,
            "d_eff": self.d_eff,
            "no_commit": self.no_commit,
            "i_hat": self.i_hat,
        }


@dataclass
class BetcResult:
    trace: RegretTrace
    theta_hat: np.ndarray | None
    i_hat: int | None
    tau: int
    N: int
    no_commit: bool


def betc_glm_run(env, config: BetcConfig, rng: np.random.Generator) -> BetcResult:
    """Run BETC-GLM once; ``rng`` seeds both the agent and the duel outcomes."""
    agent_rng, env_rng = rng.spawn(2)
    agent = BetcGlm(env.features, env.link, config, agent_rng)
    trace = run_agent(env, agent, config.T, env_rng)
    return BetcResult(trace, agent.theta_hat, agent.i_hat, agent.tau, agent.N, agent.no_commit)


# --------------------------------------------------------------------------
# BEXP3
# --------------------------------------------------------------------------


@dataclass
class Bexp3Config:
    eta: float
    gamma: float

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @classmethod
    def default(cls, T: int, K: int, d: int, lambda0: float, gamma_cap: float = 0.5) -> "Bexp3Config":
        """``eta = (log K)^(2/3) d^(-1/3) T^(-2/3)`` and ``gamma = sqrt(eta d / lambda0)``.

        ``gamma`` is capped at ``gamma_cap`` for short horizons, and ``eta`` is
        then lowered to ``lambda0 gamma^2`` so the estimates stay bounded.
        """
        if not lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        eta = math.log(max(K, 2)) ** (2 / 3) * d ** (-1 / 3) * T ** (-2 / 3)
        gamma = math.sqrt(eta * d / lambda0)
        if gamma > gamma_cap:
            gamma = gamma_cap
            eta = min(eta, lambda0 * gamma**2)
        return cls(eta, gamma)


class Bexp3(Agent):
    """Exponential weights over items with importance-weighted linear estimates.

    Both items are drawn independently from ``q_t``; the duel outcome gives a
    one-sample estimate ``Q_t^{-1} phi r`` of the parameter, from which every
    item's shifted Borda score is estimated. Cumulative estimates are shifted
    by their maximum before exponentiation.
    """

    id = "bexp3"

    def __init__(self, features: FeatureSet, config: Bexp3Config, rng: np.random.Generator):
        self.features = features
        self.config = config
        self.rng = rng
        self.K = features.K
        d = features.d
        self._outer = np.einsum("pa,pb->pab", features.flat(), features.flat()).reshape(self.K * self.K, d * d)
        self._mean_rows = features.mean_rows()
        self.q = np.full(self.K, 1.0 / self.K)
        self.S = np.zeros(self.K)
        self.last_estimate = np.zeros(self.K)

    def select_pair(self, t: int) -> tuple[int, int]:
        cdf = np.cumsum(self.q)
        u = self.rng.random(2) * cdf[-1]
        i, j = np.searchsorted(cdf, u, side="right")
        return min(int(i), self.K - 1), min(int(j), self.K - 1)

    def information(self) -> np.ndarray:
        """``Q_t = sum_{i,j} q(i) q(j) phi phi^T`` at the current distribution."""
        d = self.features.d
        w = np.outer(self.q, self.q).reshape(-1)
        return linalg.symmetrize((w @ self._outer).reshape(d, d))

    def estimate(self, i: int, j: int, r: int) -> np.ndarray:
        """Shifted Borda estimates ``<mean_j phi[k, j], Q^{-1} phi[i, j] r>`` for all ``k``."""
        x = self.features.phi[i, j]
        if r == 0 or not x.any():
            return np.zeros(self.K)
        theta = linalg.solve_spd(self.information(), x * r)
        return self._mean_rows @ theta

    def observe(self, t: int, i: int, j: int, r: int) -> None:
        est = self.estimate(i, j, r)
        self.last_estimate = est
        self.S += est
        z = self.config.eta * (self.S - self.S.max())
        w = np.exp(z)
        q_tilde = w / w.sum()
        self.q = (1.0 - self.config.gamma) * q_tilde + self.config.gamma / self.K

    def summary(self) -> dict:
        return {"eta": self.config.eta, "gamma": self.config.gamma}


# --------------------------------------------------------------------------
# Baselines without context
# --------------------------------------------------------------------------


@dataclass
class UcbBordaConfig:
    alpha: float = 0.3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


class UcbBorda(Agent):
    """UCB on the first item with a uniformly random opponent.

    Arms never played have an infinite index; ties go to the lowest index.
    """

    id = "ucb-borda"

    def __init__(self, K: int, config: UcbBordaConfig, rng: np.random.Generator):
        self.K = K
        self.config = config
        self.rng = rng
        self.n = np.zeros(K, dtype=np.int64)
        self.w = np.zeros(K, dtype=np.int64)
        self.borda_hat = np.full(K, 0.5)

    def index(self, t: int) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            bonus = np.sqrt(self.config.alpha * math.log(t) / self.n)
        return np.where(self.n == 0, np.inf, self.borda_hat + bonus)

    def select_pair(self, t: int) -> tuple[int, int]:
        i = int(np.argmax(self.index(t)))
        j = int(self.rng.integers(0, self.K))
        return i, j

    def observe(self, t: int, i: int, j: int, r: int) -> None:
        self.n[i] += 1
        self.w[i] += r
        self.borda_hat[i] = self.w[i] / self.n[i]


@dataclass
class EtcBordaConfig:
    """``N`` defaults to ``ceil(K^(-2/3) T^(2/3) log(K/delta)^(1/3))``; ``delta`` to 1/T."""

    T: int
    K: int
    delta: float | None = None
    N: int | None = None

    def __post_init__(self):
        if self.delta is None:
            self.delta = 1.0 / max(self.T, 2)
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.N is None:
            self.N = etc_budget(self.T, self.K, self.delta)
        if self.N < 0:
            raise ValueError("N must be nonnegative")


def etc_budget(T: int, K: int, delta: float) -> int:
    return math.ceil(K ** (-2 / 3) * T ** (2 / 3) * math.log(K / delta) ** (1 / 3))


class EtcBorda(Agent):
    """Round-robin first item with a uniform opponent for ``K N`` rounds, then
    play the empirical Borda winner against itself."""

    id = "etc-borda"

    def __init__(self, config: EtcBordaConfig, rng: np.random.Generator):
        self.K = config.K
        self.config = config
        self.rng = rng
        self.explore_end = config.K * config.N
        self.no_commit = self.explore_end > config.T
        if self.no_commit:
            warnings.warn(
                f"K N = {self.explore_end} exceeds T = {config.T}; exploring for the whole horizon",
                HorizonTooSmall,
                stacklevel=2,
            )
        self.n = np.zeros(self.K, dtype=np.int64)
        self.w = np.zeros(self.K, dtype=np.int64)
        self.borda_hat = np.full(self.K, 0.5)
        self.i_hat = None

    def select_pair(self, t: int) -> tuple[int, int]:
        if t <= self.explore_end:
            return (t - 1) % self.K, int(self.rng.integers(0, self.K))
        if self.i_hat is None:
            self.i_hat = int(np.argmax(self.borda_hat))
        return self.i_hat, self.i_hat

    def observe(self, t: int, i: int, j: int, r: int) -> None:
        if t <= self.explore_end:
            self.n[i] += 1
            self.w[i] += r
            self.borda_hat[i] = self.w[i] / self.n[i]

    def summary(self) -> dict:
        return {"N": self.config.N, "no_commit": self.no_commit, "i_hat": self.i_hat}


def etc_borda_run(env, config: EtcBordaConfig, rng: np.random.Generator) -> tuple[RegretTrace, EtcBorda]:
    agent_rng, env_rng = rng.spawn(2)
    agent = EtcBorda(config, agent_rng)
    return run_agent(env, agent, config.T, env_rng), agent


AGENT_NAMES = ("betc-glm", "bexp3", "ucb-borda", "etc-borda")


def make_agent(name: str, env, T: int, rng: np.random.Generator, **options) -> Agent:
    """Build an agent by name; ``options`` are that agent's config fields."""
    features = env.features
    if name == "betc-glm":
        return BetcGlm(features, env.link, BetcConfig(T=T, **options), rng)
    if name == "bexp3":
        if "eta" in options and "gamma" in options:
            config = Bexp3Config(float(options["eta"]), float(options["gamma"]))
        else:
            d_eff = features.effective_dim()
            lam = features.lambda0_in_span()
            if d_eff == 0:
                # all-zero features: estimates are identically zero, any valid pair works
                config = Bexp3Config(eta=1.0 / T, gamma=0.5)
            else:
                config = Bexp3Config.default(T, features.K, d_eff, lam, **options)
        return Bexp3(features, config, rng)
    if name == "ucb-borda":
        return UcbBorda(features.K, UcbBordaConfig(**options), rng)
    if name == "etc-borda":
        return EtcBorda(EtcBordaConfig(T=T, K=features.K, **options), rng)
    raise ValueError(f"unknown agent {name!r}; choose from {', '.join(AGENT_NAMES)}")
