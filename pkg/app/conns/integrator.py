"""
Trapezoidal implicit Runge-Kutta integration with an exact Newton inner solve.

For the trapezoidal tableau the first stage is explicit, k1 = f(x), and the
second stage solves

    K(k2) = k2 - f(x + dt/2 k1 + dt/2 k2) = 0

by Newton's method, k2 <- k2 - J(k2)^-1 K(k2) with J = I - dt/2 df/dx. The
step is x(t + dt) = x + dt/2 (k1 + k2*).
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ArgumentError, SolverError
from .linalg import power_iteration_singular_value
from .logging_config import setup_logger
from .models import NewtonConfig, NewtonTrace, TrajectoryRecord
from .systems.base_system import DynamicalSystem, as_state

logger = setup_logger()

MAX_DT_HALVINGS = 4


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (alpha, b, c) of a Runge-Kutta method with s stages."""

    alpha: Tuple[Tuple[float, ...], ...]
    b: Tuple[float, ...]
    c: Tuple[float, ...]

    def __post_init__(self) -> None:
        s = len(self.b)
        if len(self.c) != s or len(self.alpha) != s or any(len(row) != s for row in self.alpha):
            raise ArgumentError("Butcher tableau shapes are inconsistent")
        for row, ci in zip(self.alpha, self.c):
            if not np.isclose(sum(row), ci, rtol=0.0, atol=1e-14):
                raise ArgumentError("Butcher tableau rows must sum to c")

    @property
    def s(self) -> int:
        return len(self.b)

    @classmethod
    def trapezoidal(cls) -> "ButcherTableau":
        return cls(alpha=((0.0, 0.0), (0.5, 0.5)), b=(0.5, 0.5), c=(0.0, 1.0))


TRAPEZOIDAL = ButcherTableau.trapezoidal()


def _stage_point(x: np.ndarray, k1: np.ndarray, k2: np.ndarray, dt: float) -> np.ndarray:
    return x + 0.5 * dt * k1 + 0.5 * dt * k2


def _check_inputs(system: DynamicalSystem, x, k1, k2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = system.n
    return as_state(x, n), as_state(k1, n, "k1"), as_state(k2, n, "k2")


def trapezoidal_residual(system: DynamicalSystem, x, k1, k2, dt: float) -> np.ndarray:
    """K(k2) = k2 - f(x + dt/2 k1 + dt/2 k2)."""
    x, k1, k2 = _check_inputs(system, x, k1, k2)
    return k2 - system.rhs(_stage_point(x, k1, k2, dt))


def trapezoidal_jacobian(system: DynamicalSystem, x, k1, k2, dt: float) -> np.ndarray:
    """dK/dk2 = I - dt/2 df/dx at the stage point."""
    x, k1, k2 = _check_inputs(system, x, k1, k2)
    return np.eye(system.n) - 0.5 * dt * system.jacobian(_stage_point(x, k1, k2, dt))


def _newton_direction(J: np.ndarray, K: np.ndarray) -> np.ndarray:
    try:
        step = np.linalg.solve(J, K)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"Singular Newton Jacobian: {e}") from e
    if not np.all(np.isfinite(step)):
        raise SolverError("Newton update is not finite")
    return step


def newton_update(system: DynamicalSystem, x, k1, k2, dt: float) -> np.ndarray:
    """One application of the Newton self-map G(k2) = k2 - J^-1 K."""
    x, k1, k2 = _check_inputs(system, x, k1, k2)
    K = k2 - system.rhs(_stage_point(x, k1, k2, dt))
    J = np.eye(system.n) - 0.5 * dt * system.jacobian(_stage_point(x, k1, k2, dt))
    return k2 - _newton_direction(J, K)


def newton_solve(
    system: DynamicalSystem, x, dt: float, cfg: NewtonConfig, k2_init: Optional[np.ndarray] = None
) -> NewtonTrace:
    """
    Solve the trapezoidal stage equation for k2.

    Args:
        system: System providing f and df/dx.
        x: Anchoring state.
        dt: Step size in seconds.
        cfg: Tolerance and iteration budget.
        k2_init: Starting iterate; defaults to f(x).

    Returns:
        Trace of all iterates. ``converged`` is True iff the residual infinity
        norm reached ``cfg.tol`` within ``cfg.max_iter`` updates.

    Raises:
        SolverError: if the Jacobian is singular along the path.
    """
    x = as_state(x, system.n)
    k1 = system.rhs(x)
    k2 = k1.copy() if k2_init is None else as_state(k2_init, system.n, "k2_init").copy()

    K = trapezoidal_residual(system, x, k1, k2, dt)
    iterates = [k2]
    norms = [float(np.max(np.abs(K)))]

    for _ in range(cfg.max_iter):
        if norms[-1] <= cfg.tol:
            break
        J = trapezoidal_jacobian(system, x, k1, k2, dt)
        k2 = k2 - _newton_direction(J, K)
        K = trapezoidal_residual(system, x, k1, k2, dt)
        iterates.append(k2)
        norms.append(float(np.max(np.abs(K))))

    converged = norms[-1] <= cfg.tol
    if not converged:
        logger.debug("Integrator: Newton did not converge in %s iterations, residual %.3e", cfg.max_iter, norms[-1])
    return NewtonTrace(iterates=iterates, residual_norms=norms, converged=converged, x=x, dt=dt)


def step_trapezoidal(
    system: DynamicalSystem, x, dt: float, cfg: NewtonConfig, k2_init: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, NewtonTrace]:
    """
    Advance one trapezoidal step.

    The returned trace carries the convergence flag; callers decide what to do
    with a non-converged step.
    """
    x = as_state(x, system.n)
    trace = newton_solve(system, x, dt, cfg, k2_init=k2_init)
    k1 = system.rhs(x)
    return x + 0.5 * dt * (k1 + trace.k2_star), trace


def _initial_k2(previous: Optional[np.ndarray], cfg: NewtonConfig) -> Optional[np.ndarray]:
    if cfg.k2_init_policy == "previous_step" and previous is not None:
        return previous
    return None


def _substep(
    system: DynamicalSystem, x: np.ndarray, dt: float, cfg: NewtonConfig, k2_prev: Optional[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Cover one grid interval with 2, 4, ... substeps until every Newton solve converges."""
    for halving in range(1, MAX_DT_HALVINGS + 1):
        substeps = 2**halving
        h = dt / substeps
        logger.warning("Integrator: retrying step with %s substeps of %.3e s", substeps, h)
        x_sub, k2, iterations = x, k2_prev, 0
        for _ in range(substeps):
            x_sub, trace = step_trapezoidal(system, x_sub, h, cfg, k2_init=_initial_k2(k2, cfg))
            iterations += trace.iterations
            if not trace.converged:
                break
            k2 = trace.k2_star
        else:
            return x_sub, k2, iterations
    raise SolverError(f"Newton failed to converge after {MAX_DT_HALVINGS} step halvings")


def simulate(
    system: DynamicalSystem, x0, dt: float, t_end: float, cfg: NewtonConfig, record_traces: bool = False
) -> TrajectoryRecord:
    """
    Integrate from x0 over [0, t_end] on a uniform grid of spacing dt.

    A step whose Newton solve fails is retried with dt halved, up to
    ``MAX_DT_HALVINGS`` times, and still lands on the grid.

    Raises:
        SolverError: with the failing time index.
    """
    if not dt > 0 or not t_end > 0:
        raise ArgumentError(f"dt and t_end must be positive, got dt={dt}, t_end={t_end}")
    steps = max(int(round(t_end / dt)), 1)
    x = as_state(x0, system.n).copy()

    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, system.n))
    states[0] = x
    iterations = np.zeros(steps, dtype=int)
    traces: Optional[List[Optional[NewtonTrace]]] = [] if record_traces else None
    k2_prev = None

    for i in range(steps):
        try:
            x_next, trace = step_trapezoidal(system, x, dt, cfg, k2_init=_initial_k2(k2_prev, cfg))
            if trace.converged:
                iterations[i] = trace.iterations
                k2_prev = trace.k2_star
                if traces is not None:
                    traces.append(trace)
            else:
                x_next, k2_prev, iterations[i] = _substep(system, x, dt, cfg, k2_prev)
                if traces is not None:
                    traces.append(None)
        except SolverError as e:
            raise SolverError(str(e), time_index=i) from e
        x = x_next
        states[i + 1] = x

    return TrajectoryRecord(
        times=times,
        states=states,
        iterations_per_step=iterations,
        dt=dt,
        system_name=system.name,
        iteration_label="newton_iters",
        state_names=system.state_names,
        traces=traces,
    )


def _finite_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], k: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    n = k.shape[0]
    D = np.empty((n, n))
    for j in range(n):
        h = rel_step * max(1.0, abs(k[j]))
        e = np.zeros(n)
        e[j] = h
        D[:, j] = (func(k + e) - func(k - e)) / (2.0 * h)
    return D


def newton_map_contraction(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    probe_points: Sequence[np.ndarray],
) -> Tuple[float, List[int]]:
    """
    Estimate sup over probes of the largest singular value of dG/dk for the
    Newton map G(k) = k - J(k)^-1 K(k).

    dG/dk is formed by central differences of G and its largest singular value
    by power iteration. Probes where J is singular are skipped and reported.

    Returns:
        The estimate and the indices of failed probes.
    """

    def newton_map(k: np.ndarray) -> np.ndarray:
        return k - _newton_direction(np.atleast_2d(jacobian(k)), np.atleast_1d(residual(k)))

    best = 0.0
    failures: List[int] = []
    for idx, probe in enumerate(probe_points):
        k = np.atleast_1d(np.asarray(probe, dtype=float))
        try:
            D = _finite_difference_jacobian(newton_map, k)
        except SolverError as e:
            logger.warning("Integrator: contraction probe %s failed: %s", idx, e)
            failures.append(idx)
            continue
        best = max(best, power_iteration_singular_value(D))

    if failures and len(failures) == len(probe_points):
        raise SolverError("Newton Jacobian singular at every probe point")
    return best, failures


def check_newton_contraction(system: DynamicalSystem, x, dt: float, probe_points: Sequence[np.ndarray]) -> float:
    """
    Estimated sup of the largest singular value of dG/dk2 over the probes.

    A value below 1 certifies that the Newton self-map of the trapezoidal
    stage equation contracts at the probes.
    """
    x = as_state(x, system.n)
    k1 = system.rhs(x)
    estimate, _ = newton_map_contraction(
        lambda k2: trapezoidal_residual(system, x, k1, k2, dt),
        lambda k2: trapezoidal_jacobian(system, x, k1, k2, dt),
        probe_points,
    )
    return estimate


def write_trajectory(record: TrajectoryRecord, path: Path) -> None:
    """
    Write a trajectory as CSV ``t,<states>,<iteration label>`` plus a JSON sidecar.

    The first row carries 0 iterations; row i carries the iterations of the
    step that produced it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = record.state_names or tuple(f"x{i + 1}" for i in range(record.n))
    iters = np.concatenate([[0], record.iterations_per_step])
    table = np.column_stack([record.times, record.states, iters])
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=",".join(["t", *names, record.iteration_label]), comments="")

    sidecar = {
        "system": record.system_name,
        "dt": record.dt,
        "state_names": list(names),
        "iteration_label": record.iteration_label,
        "total_iterations": record.total_iterations,
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)


def read_trajectory(path: Path) -> TrajectoryRecord:
    path = Path(path)
    with open(path.with_suffix(".json"), "r", encoding="utf-8") as f:
        sidecar = json.load(f)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TrajectoryRecord(
        times=table[:, 0],
        states=table[:, 1:-1],
        iterations_per_step=table[1:, -1].astype(int),
        dt=float(sidecar["dt"]),
        system_name=sidecar["system"],
        iteration_label=sidecar["iteration_label"],
        state_names=tuple(sidecar["state_names"]),
    )
