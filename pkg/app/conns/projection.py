"""
Projections of weight matrices onto contraction-enforcing sets.

Two constraint sets are supported, each with margin eps:

* spectral: largest singular value <= 1 - eps. The Frobenius-nearest point
  is obtained by clipping singular values. For a non-square W the bordered
  matrix [W | M] with M = 0 gives the same set, so one routine covers both.
* symmetric: W = W^T with all eigenvalues in [-(1 - eps), 1 - eps]. The
  nearest point symmetrizes and clamps eigenvalues.

``qr_optimal_projection`` instead minimizes the change of the layer output
||(W_hat - W) X||_F over sampled layer inputs X, which is the warm start for
constrained training.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .exceptions import ArgumentError, NumericError
from .linalg import max_singular_value, singular_values
from .logging_config import setup_logger
from .models import FeasibilityReport, ProjectionEntry, ProjectionReport, ProjectionSpec
from .network import NetworkParams, batch_arrays, forward_with_cache

logger = setup_logger()

FEASIBILITY_TOL = 1e-8
RIDGE = 1e-10


def project_spectral(W: np.ndarray, eps: float) -> np.ndarray:
    """Nearest matrix in Frobenius norm whose singular values are all <= 1 - eps."""
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise NumericError("Cannot project a matrix with non-finite entries")
    bound = 1.0 - eps
    try:
        U, s, Vt = scipy.linalg.svd(W, full_matrices=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"SVD failed: {e}") from e
    if s.size == 0 or s[0] <= bound:
        return W.copy()
    return (U * np.minimum(s, bound)) @ Vt


def project_symmetric(W: np.ndarray, eps: float) -> np.ndarray:
    """Nearest symmetric matrix in Frobenius norm with eigenvalues in [-(1 - eps), 1 - eps]."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ArgumentError(f"Symmetric projection needs a square matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise NumericError("Cannot project a matrix with non-finite entries")
    bound = 1.0 - eps
    S = 0.5 * (W + W.T)
    try:
        lam, V = scipy.linalg.eigh(S)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"Eigendecomposition failed: {e}") from e
    if np.array_equal(S, W) and np.all(np.abs(lam) <= bound):
        return W.copy()
    return (V * np.clip(lam, -bound, bound)) @ V.T


def project(W: np.ndarray, spec: ProjectionSpec) -> np.ndarray:
    """
    Project W according to ``spec.mode``.

    Symmetric mode falls back to the spectral clip for non-square matrices,
    where symmetry is undefined.
    """
    W = np.asarray(W, dtype=float)
    if spec.mode == "symmetric" and W.shape[0] == W.shape[1]:
        return project_symmetric(W, spec.eps)
    return project_spectral(W, spec.eps)


def symmetry_defect(W: np.ndarray) -> float:
    return float(np.linalg.norm(W - W.T) / np.sqrt(2.0))


def verify_feasible(W: np.ndarray, spec: ProjectionSpec) -> FeasibilityReport:
    W = np.asarray(W, dtype=float)
    sigma = max_singular_value(W)
    feasible = sigma <= spec.bound + FEASIBILITY_TOL
    defect = 0.0
    if spec.mode == "symmetric" and W.shape[0] == W.shape[1]:
        defect = symmetry_defect(W)
        feasible = feasible and defect <= FEASIBILITY_TOL
    return FeasibilityReport(feasible=bool(feasible), sigma_max=sigma, symmetry_defect=defect)


def verify_network(p: NetworkParams, spec: ProjectionSpec) -> Dict[str, FeasibilityReport]:
    return {name: verify_feasible(W, spec) for name, W in p.layer_weights()}


def qr_optimal_projection(
    W: np.ndarray,
    X: np.ndarray,
    spec: ProjectionSpec,
    reduced: bool = True,
    tol: float = 1e-9,
    max_iter: int = 10000,
) -> np.ndarray:
    """
    Feasible W_hat minimizing ||(W_hat - W) X||_F.

    With ``reduced`` the data enter through the triangular factor of the thin
    QR factorization X^T = Q R, since ||(W_hat - W) X||_F = ||(W_hat - W) R^T||_F.
    Without it the full data matrix is used. Either way the problem is solved
    by accelerated projected gradient (FISTA) started at project(W).

    Args:
        W: Unconstrained layer matrix, shape (a, b).
        X: Layer inputs as columns, shape (b, d).
        spec: Constraint set.
        reduced: Solve through R instead of X.
        tol: Stop when the update infinity norm drops to this value.
        max_iter: Iteration cap.

    Returns:
        The projected matrix.
    """
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != W.shape[1]:
        raise ArgumentError(f"Data matrix must have {W.shape[1]} rows, got shape {X.shape}")

    if reduced:
        try:
            R = scipy.linalg.qr(X.T, mode="r")[0]
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericError(f"QR factorization failed: {e}") from e
        M = R[: min(R.shape), :].T
    else:
        M = X

    sv = singular_values(M)
    ridge = 0.0
    if M.shape[1] < M.shape[0] or sv.size == 0 or sv[-1] <= 1e-12 * max(sv[0], 1.0):
        logger.warning("Projection: layer data is rank deficient, adding ridge %.0e", RIDGE)
        ridge = RIDGE
    L = 2.0 * ((sv[0] if sv.size else 0.0) ** 2 + ridge)
    if L == 0.0:
        return project(W, spec)

    def grad(Y: np.ndarray) -> np.ndarray:
        D = Y - W
        return 2.0 * ((D @ M) @ M.T + ridge * D)

    Z = project(W, spec)
    Y = Z
    t = 1.0
    for _ in range(max_iter):
        Z_new = project(Y - grad(Y) / L, spec)
        delta = float(np.max(np.abs(Z_new - Z))) if Z.size else 0.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = Z_new + ((t - 1.0) / t_new) * (Z_new - Z)
        Z, t = Z_new, t_new
        if delta <= tol:
            break
    else:
        logger.warning("Projection: QR-optimal projection stopped after %s iterations", max_iter)
    return Z


def layer_change_report(before: NetworkParams, after: NetworkParams) -> ProjectionReport:
    """Per-layer largest singular value before and after, and the Frobenius size of the change."""
    report = ProjectionReport()
    for (name, W), (_, W_new) in zip(before.layer_weights(), after.layer_weights()):
        report.entries.append(
            ProjectionEntry(
                layer=name,
                sv_before=max_singular_value(W),
                sv_after=max_singular_value(W_new),
                frob_change=float(np.linalg.norm(W_new - W)),
            )
        )
    return report


def project_network(p: NetworkParams, spec: ProjectionSpec) -> Tuple[NetworkParams, ProjectionReport]:
    """Project W1..Wh independently; U and the biases are left untouched."""
    projected = p.with_layer_weights([project(W, spec) for _, W in p.layer_weights()])
    return projected, layer_change_report(p, projected)


def layer_inputs(p: NetworkParams, ds: Dataset, max_columns: Optional[int] = 4096, seed: int = 0) -> List[np.ndarray]:
    """Inputs of W1..Wh on a uniform sample of the dataset, one (b, d) matrix per layer."""
    K2, X, _ = batch_arrays(ds)
    if max_columns is not None and K2.shape[0] > max_columns:
        idx = np.sort(np.random.default_rng(seed).choice(K2.shape[0], size=max_columns, replace=False))
        K2, X = K2[idx], X[idx]
    _, _, inputs, _ = forward_with_cache(p, K2, X)
    return [a.T for a in inputs]


def constrained_init(
    unconstrained: NetworkParams,
    ds: Dataset,
    spec: ProjectionSpec,
    max_columns: int = 4096,
    full: bool = False,
    seed: int = 0,
    workers: int = 1,
) -> NetworkParams:
    """
    Data-aware projection of a trained unconstrained network.

    Each W_i is replaced by the feasible matrix that best preserves its output
    on the inputs it sees in the unconstrained network.
    """
    inputs = layer_inputs(unconstrained, ds, None if full else max_columns, seed)
    weights = [W for _, W in unconstrained.layer_weights()]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        projected = list(executor.map(lambda pair: qr_optimal_projection(pair[0], pair[1], spec), zip(weights, inputs)))

    for (name, W), W_new in zip(unconstrained.layer_weights(), projected):
        logger.info(
            "Projection: %s sigma %.4f -> %.4f, change %.4e",
            name,
            max_singular_value(W),
            max_singular_value(W_new),
            np.linalg.norm(W_new - W),
        )
    p = unconstrained.with_layer_weights(projected)
    return replace(p, meta=replace(p.meta, projection_mode=spec.mode, eps_proj=spec.eps))
