"""
Trajectory error and iteration metrics, vector fields and singular-value spectra.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ArgumentError, SolverError
from .integrator import simulate
from .linalg import singular_values
from .logging_config import setup_logger
from .models import (
    FixedPointConfig,
    GridSpec,
    MetricsTable,
    NewtonConfig,
    SingularValueSpectra,
    StateStats,
    TrajectoryRecord,
    VectorFieldGrid,
)
from .network import NetworkParams, forward_batch
from .runtime import conns_simulate, fixed_point_iterate
from .systems.base_system import DynamicalSystem

logger = setup_logger()

NEWTON = "Newton"


def trajectory_error(reference: TrajectoryRecord, predicted: TrajectoryRecord) -> np.ndarray:
    """Per-state 2-norm of the pointwise difference over the whole trajectory."""
    if reference.times.shape != predicted.times.shape or not np.array_equal(reference.times, predicted.times):
        raise ArgumentError("Trajectories are not on the same time grid")
    if reference.states.shape != predicted.states.shape:
        raise ArgumentError(f"State shapes differ: {reference.states.shape} vs {predicted.states.shape}")
    return np.linalg.norm(predicted.states - reference.states, axis=0)


def _stats(label: str, values: Sequence[float]) -> StateStats:
    values = [float(v) for v in values]
    if any(math.isinf(v) for v in values):
        return StateStats(label, math.inf, math.inf, math.inf)
    mean = math.fsum(values) / len(values)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))
    return StateStats(label, mean, sd, max(values))


def summarize(
    errors: Sequence[np.ndarray],
    iterations: Sequence[int],
    method: str = "",
    split: str = "",
    state_names: Sequence[str] = (),
) -> MetricsTable:
    """
    Population mean, sd and max of per-trajectory errors and cumulative iteration counts.

    Sums are exactly rounded, so the result does not depend on trajectory order.

    Raises:
        ArgumentError: if either list is empty.
    """
    if len(errors) == 0 or len(iterations) == 0:
        raise ArgumentError("summarize needs at least one trajectory")
    E = np.atleast_2d(np.asarray(errors, dtype=float))
    names = list(state_names) or [f"x{i + 1}" for i in range(E.shape[1])]
    if len(names) != E.shape[1]:
        raise ArgumentError(f"{len(names)} state names for {E.shape[1]} states")
    return MetricsTable(
        method=method,
        split=split,
        errors=[_stats(name, E[:, i]) for i, name in enumerate(names)],
        iterations=_stats("iterations", iterations),
    )


@dataclass
class SplitResult:
    """Metrics of every method on one split plus the trajectories of the first initial condition."""

    tables: List[MetricsTable]
    overlay: Dict[str, TrajectoryRecord] = field(default_factory=dict)
    diverged: Dict[str, int] = field(default_factory=dict)


def _alternate_newton(cfg: NewtonConfig) -> NewtonConfig:
    other = "f_of_x" if cfg.k2_init_policy == "previous_step" else "previous_step"
    return replace(cfg, k2_init_policy=other)


def evaluate_split(
    system: DynamicalSystem,
    initial_conditions: Sequence[np.ndarray],
    dt: float,
    t_end: float,
    newton_cfg: NewtonConfig,
    models: Dict[str, Tuple[NetworkParams, FixedPointConfig]],
    split: str,
    workers: int = 1,
) -> SplitResult:
    """
    Compare every model against the Newton reference on the given initial conditions.

    The Newton row compares the reference with a second Newton run using the
    other k2 initialization, which measures the solver-noise floor. A model
    run whose state stops being finite counts with infinite error and is left
    out of the iteration statistics.
    """
    if len(initial_conditions) == 0:
        raise ArgumentError("No initial conditions to evaluate")
    alternate = _alternate_newton(newton_cfg)

    def run(x0: np.ndarray) -> Dict[str, Optional[TrajectoryRecord]]:
        out: Dict[str, Optional[TrajectoryRecord]] = {
            "reference": simulate(system, x0, dt, t_end, newton_cfg),
            "alternate": simulate(system, x0, dt, t_end, alternate),
        }
        for label, (p, fp_cfg) in models.items():
            try:
                out[label] = conns_simulate(p, system, x0, dt, t_end, fp_cfg)
            except SolverError as e:
                logger.warning("Evaluation: %s failed on %s split: %s", label, split, e)
                out[label] = None
        return out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        runs = list(executor.map(run, initial_conditions))

    names = system.state_names
    tables = [
        summarize(
            [trajectory_error(r["reference"], r["alternate"]) for r in runs],
            [r["reference"].total_iterations for r in runs],
            method=NEWTON,
            split=split,
            state_names=names,
        )
    ]
    result = SplitResult(tables=tables)
    for label in models:
        records = [r[label] for r in runs]
        errors = [
            trajectory_error(r["reference"], rec) if rec is not None else np.full(system.n, math.inf)
            for r, rec in zip(runs, records)
        ]
        iterations = [rec.total_iterations for rec in records if rec is not None]
        result.diverged[label] = len(records) - len(iterations)
        if iterations:
            tables.append(summarize(errors, iterations, method=label, split=split, state_names=names))
        else:
            table = summarize(errors, [0], method=label, split=split, state_names=names)
            tables.append(replace(table, iterations=StateStats("iterations", math.nan, math.nan, math.nan)))

    first = runs[0]
    result.overlay = {NEWTON: first["reference"], **{label: first[label] for label in models if first[label] is not None}}
    return result


def export_vector_field(
    p: NetworkParams,
    x,
    axes: Tuple[int, int],
    grid: GridSpec = GridSpec(),
    cfg: FixedPointConfig = FixedPointConfig(),
    base_k2: Optional[np.ndarray] = None,
) -> VectorFieldGrid:
    """
    Displacement Phi(k2, x) - k2 on a grid over components ``axes`` of k2.

    The other components of k2 are held at ``base_k2``, by default the fixed
    point of Phi at x, which is also the default grid center.
    """
    i, j = axes
    if i == j or not (0 <= i < p.n and 0 <= j < p.n):
        raise ArgumentError(f"Axes {axes} must be two distinct indices below {p.n}")
    x = np.asarray(x, dtype=float)

    fp = fixed_point_iterate(p, x, np.zeros(p.n), cfg)
    if not fp.converged:
        logger.warning("Evaluation: no fixed point at anchor %s (delta %.3e)", x, fp.final_delta)
    base = fp.k2_star if base_k2 is None else np.asarray(base_k2, dtype=float)
    center = grid.center if grid.center is not None else (base[i], base[j])

    ki = np.linspace(center[0] - grid.span, center[0] + grid.span, grid.points)
    kj = np.linspace(center[1] - grid.span, center[1] + grid.span, grid.points)
    KI, KJ = np.meshgrid(ki, kj, indexing="ij")
    K2 = np.tile(base, (KI.size, 1))
    K2[:, i] = KI.ravel()
    K2[:, j] = KJ.ravel()
    step = forward_batch(p, K2, np.tile(x, (KI.size, 1))) - K2

    return VectorFieldGrid(
        anchor=x,
        axes=(i, j),
        k_i=KI,
        k_j=KJ,
        dx=step[:, i].reshape(KI.shape),
        dy=step[:, j].reshape(KI.shape),
        fixed_point=fp.k2_star,
    )


def export_sv_histogram(p: NetworkParams, title: str = "") -> SingularValueSpectra:
    """Every singular value of W1..Wh, keyed by layer name."""
    return SingularValueSpectra(spectra={name: singular_values(W) for name, W in p.layer_weights()}, title=title)
