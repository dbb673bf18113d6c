"""Small dense symmetric linear algebra.

Every matrix here is at most a few dozen rows, so everything is a direct
factorization. A tiny trace-relative ridge is added before solving because
the information matrices built by the agents can be numerically singular
even when they are positive definite in exact arithmetic.
"""

import numpy as np
from scipy import linalg as sla

RIDGE_SCALE = 1e-10


class SingularMatrix(np.linalg.LinAlgError):
    """Raised when a matrix is not positive definite after regularization."""


def symmetrize(A) -> np.ndarray:
    """Average ``A`` with its transpose so entries mirror exactly."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def gram(X, weights=None) -> np.ndarray:
    """Symmetric ``sum_n w_n x_n x_n^T`` for rows ``x_n`` of ``X``."""
    X = np.asarray(X, dtype=float)
    if weights is None:
        return symmetrize(X.T @ X)
    return symmetrize((X * np.asarray(weights, dtype=float)[:, None]).T @ X)


def ridge(A: np.ndarray) -> float:
    """Regularization added to the diagonal before any solve."""
    return RIDGE_SCALE * float(np.trace(A)) / A.shape[0]


def cholesky(A) -> tuple:
    """Cholesky factor of ``A + ridge(A) * I`` in scipy's ``cho_factor`` form."""
    A = np.asarray(A, dtype=float)
    reg = A + ridge(A) * np.eye(A.shape[0])
    try:
        return sla.cho_factor(reg, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(str(exc)) from exc


def cho_solve(factor: tuple, b) -> np.ndarray:
    """Solve with a factor returned by :func:`cholesky`."""
    return sla.cho_solve(factor, np.asarray(b, dtype=float), check_finite=False)


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    ``b`` may be a vector or a matrix of right-hand sides. One step of
    iterative refinement against the unregularized ``A`` removes the bias of
    the ridge; it is kept only when it lowers the residual, so numerically
    singular systems behave as a plain ridge solve.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    factor = cholesky(A)
    x = cho_solve(factor, b)
    res = b - A @ x
    refined = x + cho_solve(factor, res)
    if np.linalg.norm(b - A @ refined) < np.linalg.norm(res):
        return refined
    return x


def min_eigenvalue(A) -> float:
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=float))[0])


def weighted_norm_sq(x, A) -> float:
    """``x^T A^{-1} x``."""
    x = np.asarray(x, dtype=float)
    return max(float(x @ solve_spd(A, x)), 0.0)


def weighted_norms_sq(X, A) -> np.ndarray:
    """Row-wise ``x^T A^{-1} x`` for a stack of vectors ``X`` of shape (n, d)."""
    X = np.asarray(X, dtype=float)
    Y = solve_spd(A, X.T).T
    return np.maximum(np.einsum("nd,nd->n", X, Y), 0.0)


def span_basis(X, rtol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (d, r) of the row span of ``X``.

    Rank is decided by singular values above ``rtol * sigma_max``.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((X.shape[-1], 0))
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((X.shape[1], 0))
    r = int(np.sum(s > rtol * s[0]))
    return vt[:r].T
