"""
Fixed-point iteration of a trained network and its use as the stage solver
of trapezoidal time stepping.
"""

import math
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import NonConvergenceError, SolverError, UsageError
from .logging_config import setup_logger
from .models import FixedPointConfig, FixedPointResult, TrajectoryRecord
from .network import NetworkParams, forward
from .systems.base_system import DynamicalSystem, as_state

logger = setup_logger()

POLICIES = ("abort", "accept_best")
RATE_WINDOW = 10


def estimate_rate(step_norms: List[float], window: int = RATE_WINDOW) -> float:
    """Median ratio of successive update norms over the last ``window`` ratios."""
    ratios = [b / a for a, b in zip(step_norms[:-1], step_norms[1:]) if a > 0.0][-window:]
    return float(np.median(ratios)) if ratios else 0.0


def fixed_point_iterate(p: NetworkParams, x, k2_init, cfg: FixedPointConfig) -> FixedPointResult:
    """
    Iterate k2 <- Phi(k2, x) until the update infinity norm is <= cfg.tol.

    Exhausting ``cfg.max_iter`` is not an error: the result has
    ``converged=False`` and carries the iterate that followed the smallest update.
    """
    x = as_state(x, p.n)
    k = as_state(k2_init, p.n, "k2_init")

    deltas: List[float] = []
    step_norms: List[float] = []
    best_k, best_delta = k, math.inf

    for _ in range(cfg.max_iter):
        k_next = forward(p, k, x)
        step = k_next - k
        delta = float(np.max(np.abs(step)))
        deltas.append(delta)
        step_norms.append(float(np.linalg.norm(step)))
        k = k_next
        if not np.isfinite(delta):
            break
        if delta < best_delta:
            best_k, best_delta = k, delta
        if delta <= cfg.tol:
            return FixedPointResult(
                k2_star=k,
                iterations=len(deltas),
                converged=True,
                final_delta=delta,
                rate_estimate=estimate_rate(step_norms),
                deltas=deltas,
            )

    return FixedPointResult(
        k2_star=best_k,
        iterations=len(deltas),
        converged=False,
        final_delta=best_delta,
        rate_estimate=estimate_rate(step_norms),
        deltas=deltas,
    )


def check_model_matches(p: NetworkParams, system: DynamicalSystem, dt: float) -> None:
    """Raise UsageError if the checkpoint was trained for another system or step size."""
    meta = p.meta
    if meta.system_name and meta.system_name != system.name:
        raise UsageError(f"Model was trained on system '{meta.system_name}', not '{system.name}'")
    if meta.dt is not None and not math.isclose(meta.dt, dt, rel_tol=1e-12, abs_tol=0.0):
        raise UsageError(f"Model was trained at dt={meta.dt}, not dt={dt}")
    if p.n != system.n:
        raise UsageError(f"Model has n={p.n}, system '{system.name}' has n={system.n}")


def initial_k2(x: np.ndarray, k1: np.ndarray, previous: Optional[np.ndarray], cfg: FixedPointConfig) -> np.ndarray:
    if cfg.init_policy == "zeros":
        return np.zeros_like(x)
    if cfg.init_policy == "previous_step" and previous is not None:
        return previous
    return k1


def conns_step(
    p: NetworkParams,
    system: DynamicalSystem,
    x,
    dt: float,
    cfg: FixedPointConfig,
    k2_init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, FixedPointResult]:
    """
    One trapezoidal step with k2* from the network: x + dt/2 (f(x) + k2*).

    Raises:
        UsageError: if the model metadata does not match the system or dt.
    """
    check_model_matches(p, system, dt)
    x = as_state(x, system.n)
    k1 = system.rhs(x)
    result = fixed_point_iterate(p, x, initial_k2(x, k1, k2_init, cfg), cfg)
    return x + 0.5 * dt * (k1 + result.k2_star), result


def default_policy(p: NetworkParams) -> str:
    return "abort" if p.meta.constrained else "accept_best"


def conns_simulate(
    p: NetworkParams,
    system: DynamicalSystem,
    x0,
    dt: float,
    t_end: float,
    cfg: FixedPointConfig,
    policy: Optional[str] = None,
) -> TrajectoryRecord:
    """
    Integrate with the network in place of the Newton solver.

    Args:
        policy: ``abort`` raises NonConvergenceError on the first step that
            meets neither ``cfg.tol`` nor ``cfg.fallback_tol``;
            ``accept_best`` keeps the best iterate and continues. Defaults to abort for constrained models and
            accept_best otherwise.

    Raises:
        NonConvergenceError: under the abort policy.
        SolverError: when the state stops being finite.
    """
    policy = policy or default_policy(p)
    if policy not in POLICIES:
        raise UsageError(f"Unknown non-convergence policy '{policy}'")
    check_model_matches(p, system, dt)

    steps = max(int(round(t_end / dt)), 1)
    x = as_state(x0, system.n).copy()
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, system.n))
    states[0] = x
    iterations = np.zeros(steps, dtype=int)
    k2_prev = None
    misses = 0

    for i in range(steps):
        x, result = conns_step(p, system, x, dt, cfg, k2_init=k2_prev)
        iterations[i] = result.iterations
        softened = cfg.fallback_tol is not None and result.final_delta <= cfg.fallback_tol
        if not result.converged and not softened:
            if policy == "abort":
                raise NonConvergenceError(
                    f"Fixed-point iteration did not converge in {cfg.max_iter} iterations (delta {result.final_delta:.3e})",
                    time_index=i,
                )
            misses += 1
        if not np.all(np.isfinite(x)):
            raise SolverError("State is no longer finite", time_index=i)
        states[i + 1] = x
        k2_prev = result.k2_star

    if misses:
        logger.warning("Runtime: %s of %s steps hit the iteration cap of %s", misses, steps, cfg.max_iter)
    return TrajectoryRecord(
        times=times,
        states=states,
        iterations_per_step=iterations,
        dt=dt,
        system_name=system.name,
        iteration_label="conns_iters",
        state_names=system.state_names,
    )
