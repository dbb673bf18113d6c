"""Maximum-likelihood estimation for the GLM preference model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .model import FEATURE_NORM_TOL, LinkFunction, LinkKind

MLE_TOL = 1e-6


class NonConvergence(RuntimeWarning):
    """The MLE score equation was not solved within the iteration budget."""


@dataclass
class SampleLog:
    """Observed duels as feature rows ``phi`` (n, d) with outcomes ``r``.

    ``r`` is normally 0/1. Aggregated data may use fractional ``r`` (a win
    rate) together with a ``weight`` giving the number of duels it stands for.
    """

    phi: np.ndarray
    r: np.ndarray
    weight: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        self.r = np.asarray(self.r, dtype=float).reshape(-1)
        if self.phi.shape[0] != self.r.shape[0]:
            raise ValueError("phi and r disagree on the number of samples")
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=float).reshape(-1)
            if self.weight.shape != self.r.shape or (self.weight < 0).any():
                raise ValueError("weights must be nonnegative, one per sample")
        if self.phi.size and np.linalg.norm(self.phi, axis=1).max() > 1.0 + FEATURE_NORM_TOL:
            raise ValueError("sample feature norm exceeds 1")

    @property
    def n(self) -> float:
        return float(self.r.size if self.weight is None else self.weight.sum())

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    def _w(self) -> np.ndarray:
        return np.ones_like(self.r) if self.weight is None else self.weight

    def design_matrix(self) -> np.ndarray:
        return linalg.gram(self.phi, self._w())


def mle_linear(samples: SampleLog) -> np.ndarray:
    """Closed form ``V^{-1} sum (r - 1/2) phi`` for the link ``mu(x) = 1/2 + x``."""
    V = samples.design_matrix()
    rhs = samples.phi.T @ (samples._w() * (samples.r - 0.5))
    return linalg.solve_spd(V, rhs)


def log_likelihood(theta, samples: SampleLog, link: LinkFunction) -> float:
    """``sum w [r x - m(x)]`` with ``x = <phi, theta>`` and ``m' = mu``."""
    x = samples.phi @ np.asarray(theta, dtype=float)
    return float(np.sum(samples._w() * (samples.r * x - link.log_partition(x))))


def score(theta, samples: SampleLog, link: LinkFunction) -> np.ndarray:
    """Gradient of the log-likelihood, ``sum w (r - mu(x)) phi``."""
    x = samples.phi @ np.asarray(theta, dtype=float)
    return samples.phi.T @ (samples._w() * (samples.r - link.mu(x)))


@dataclass
class GLMFit:
    theta: np.ndarray
    converged: bool
    residual: float
    iterations: int
    log_likelihood: list = field(default_factory=list, repr=False)


def mle_glm(
    samples: SampleLog,
    link: LinkFunction,
    iterations: int = 100,
    tol: float = MLE_TOL,
    theta0=None,
) -> GLMFit:
    """Solve ``sum mu(<phi, theta>) phi = sum r phi`` by gradient ascent.

    The ascent direction is the score preconditioned by ``(L_mu V)^{-1}``
    where ``V`` is the sample design matrix; since ``L_mu V`` bounds the
    negative Hessian, the unit step never overshoots and a backtracking
    (Armijo) line search keeps the log-likelihood nondecreasing. Stops once
    ``||score|| <= tol * n``. Warns with ``NonConvergence`` and returns the
    last iterate when the budget runs out.
    """
    if samples.r.size == 0:
        raise ValueError("cannot fit on an empty sample log")
    n = samples.n
    theta = np.zeros(samples.d) if theta0 is None else np.array(theta0, dtype=float)
    factor = linalg.cholesky(link.L_mu * samples.design_matrix())
    ll = log_likelihood(theta, samples, link)
    history = [ll]
    grad = score(theta, samples, link)
    res = float(np.linalg.norm(grad))
    it = 0
    while res > tol * n and it < iterations:
        it += 1
        direction = linalg.cho_solve(factor, grad)
        slope = float(grad @ direction)
        step = 1.0
        while True:
            cand = theta + step * direction
            cand_ll = log_likelihood(cand, samples, link)
            if cand_ll >= ll + 1e-4 * step * slope or step < 1e-12:
                break
            step *= 0.5
        if cand_ll < ll:
            break
        theta, ll = cand, cand_ll
        history.append(ll)
        grad = score(theta, samples, link)
        res = float(np.linalg.norm(grad))
    converged = res <= tol * n
    if not converged:
        warnings.warn(
            f"MLE residual {res:.3g} > {tol * n:.3g} after {it} iterations", NonConvergence, stacklevel=2
        )
    return GLMFit(theta, converged, res, it, history)


def estimate_borda(theta_hat, features, link: LinkFunction) -> np.ndarray:
    """``B(i) = (1/K) sum_j mu(<phi[i, j], theta_hat>)``.

    Linear-link values are clipped to [0, 1]; the clip is symmetric about 1/2
    so the mean over items stays exactly 1/2.
    """
    x = features.phi @ np.asarray(theta_hat, dtype=float)
    p = link.mu(x)
    if link.kind is LinkKind.LINEAR:
        p = np.clip(p, 0.0, 1.0)
    return p.mean(axis=1)
