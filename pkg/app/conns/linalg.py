"""
Small dense linear-algebra helpers.
"""

import numpy as np
import scipy.linalg

from .exceptions import NumericError


def singular_values(W: np.ndarray) -> np.ndarray:
    """All singular values of W in descending order."""
    try:
        return scipy.linalg.svdvals(np.atleast_2d(W))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"SVD failed: {e}") from e


def max_singular_value(W: np.ndarray) -> float:
    if np.size(W) == 0:
        return 0.0
    return float(singular_values(W)[0])


def power_iteration_singular_value(M: np.ndarray, iters: int = 500, tol: float = 1e-14, seed: int = 0) -> float:
    """
    Largest singular value of M by power iteration on M^T M.

    Args:
        M: Matrix to analyse.
        iters: Maximum number of iterations.
        tol: Relative change in the estimate at which to stop.
        seed: Seed for the random start vector.

    Returns:
        Estimate of the largest singular value.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = M @ v
        w = M.T @ u
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_sigma = float(np.linalg.norm(M @ v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    return sigma
