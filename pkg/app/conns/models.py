"""
Data classes for solver settings and structured returns.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ArgumentError

INIT_POLICIES = ("previous_step", "f_of_x", "zeros")
PROJECTION_MODES = ("none", "symmetric", "spectral")


@dataclass(frozen=True)
class NewtonConfig:
    """Settings of the Newton inner solver."""

    tol: float = 1e-9
    max_iter: int = 50
    k2_init_policy: str = "previous_step"

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ArgumentError(f"Newton tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ArgumentError(f"Newton max_iter must be >= 1, got {self.max_iter}")
        if self.k2_init_policy not in ("previous_step", "f_of_x"):
            raise ArgumentError(f"Unknown k2 init policy '{self.k2_init_policy}'")


@dataclass
class NewtonTrace:
    """All iterates of one Newton solve, anchored at state x."""

    iterates: List[np.ndarray]
    residual_norms: List[float]
    converged: bool
    x: np.ndarray
    dt: float

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def k2_star(self) -> np.ndarray:
        return self.iterates[-1]


@dataclass
class TrajectoryRecord:
    """A trajectory on a uniform time grid with per-step solver iteration counts."""

    times: np.ndarray
    states: np.ndarray
    iterations_per_step: np.ndarray
    dt: float
    system_name: str = ""
    iteration_label: str = "newton_iters"
    state_names: Tuple[str, ...] = ()
    # one entry per step; None where the step had to be subdivided
    traces: Optional[List[Optional[NewtonTrace]]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def total_iterations(self) -> int:
        return int(np.sum(self.iterations_per_step))


@dataclass(frozen=True)
class FixedPointConfig:
    """Settings of the recurrent network iteration."""

    tol: float = 1e-9
    max_iter: int = 1000
    init_policy: str = "previous_step"
    # looser tolerance a non-converged step may still meet to be accepted
    fallback_tol: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ArgumentError(f"Fixed-point tol must be positive, got {self.tol}")
        if self.fallback_tol is not None and not self.fallback_tol >= self.tol:
            raise ArgumentError(f"Fixed-point fallback_tol must be >= tol, got {self.fallback_tol}")
        if self.max_iter < 1:
            raise ArgumentError(f"Fixed-point max_iter must be >= 1, got {self.max_iter}")
        if self.init_policy not in INIT_POLICIES:
            raise ArgumentError(f"Unknown init policy '{self.init_policy}'")


@dataclass
class FixedPointResult:
    """Outcome of iterating k2 <- Phi(k2, x)."""

    k2_star: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    rate_estimate: float
    deltas: List[float] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class ProjectionSpec:
    """Constraint set used to keep each weight matrix contracting."""

    mode: str = "spectral"
    eps: float = 1e-3

    def __post_init__(self) -> None:
        if self.mode not in ("symmetric", "spectral"):
            raise ArgumentError(f"Unknown projection mode '{self.mode}'")
        if not 0 < self.eps <= 0.5:
            raise ArgumentError(f"Projection eps must be in (0, 0.5], got {self.eps}")

    @property
    def bound(self) -> float:
        return 1.0 - self.eps


@dataclass
class FeasibilityReport:
    """Result of checking one matrix against a ProjectionSpec."""

    feasible: bool
    sigma_max: float
    symmetry_defect: float = 0.0


@dataclass
class ProjectionEntry:
    layer: str
    sv_before: float
    sv_after: float
    frob_change: float


@dataclass
class ProjectionReport:
    """Per-matrix effect of a projection pass."""

    entries: List[ProjectionEntry] = field(default_factory=list)

    def rows(self) -> List[Tuple[str, float, float, float]]:
        return [(e.layer, e.sv_before, e.sv_after, e.frob_change) for e in self.entries]


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer and constraint settings for full-batch training."""

    lr: float = 1e-4
    epochs: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    projection_mode: str = "none"
    eps_proj: float = 1e-3
    seed: int = 0
    loss_target: Optional[float] = None
    log_every: int = 100
    standardize: bool = False

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ArgumentError(f"Learning rate must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ArgumentError(f"Epochs must be >= 1, got {self.epochs}")
        if self.projection_mode not in PROJECTION_MODES:
            raise ArgumentError(f"Unknown projection mode '{self.projection_mode}'")
        if not 0 < self.eps_proj < 1:
            raise ArgumentError(f"eps_proj must be in (0, 1), got {self.eps_proj}")

    @property
    def projection_spec(self) -> Optional[ProjectionSpec]:
        if self.projection_mode == "none":
            return None
        return ProjectionSpec(mode=self.projection_mode, eps=self.eps_proj)


@dataclass(frozen=True)
class Architecture:
    """Width, depth and output activation of the fixed-point network."""

    width: int = 40
    hidden_layers: int = 3
    final_linear: bool = True

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ArgumentError(f"Width must be >= 1, got {self.width}")
        if self.hidden_layers < 1:
            raise ArgumentError(f"hidden_layers must be >= 1, got {self.hidden_layers}")

    @property
    def h(self) -> int:
        """Number of weight layers."""
        return self.hidden_layers + 1


@dataclass
class ModelMetadata:
    """Provenance stored with a checkpoint and checked before the model is used to step."""

    system_name: str = ""
    dt: Optional[float] = None
    projection_mode: str = "none"
    eps_proj: Optional[float] = None

    @property
    def constrained(self) -> bool:
        return self.projection_mode != "none"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "system_name": self.system_name,
            "dt": self.dt,
            "projection_mode": self.projection_mode,
            "eps_proj": self.eps_proj,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelMetadata":
        return cls(
            system_name=data.get("system_name", ""),
            dt=data.get("dt"),
            projection_mode=data.get("projection_mode", "none"),
            eps_proj=data.get("eps_proj"),
        )


@dataclass(frozen=True)
class GridSpec:
    """Square grid of ``points`` x ``points`` nodes spanning center +/- span on two k2 components."""

    points: int = 21
    span: float = 1.0
    center: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.points < 2:
            raise ArgumentError(f"Grid needs at least 2 points per axis, got {self.points}")
        if not self.span > 0:
            raise ArgumentError(f"Grid span must be positive, got {self.span}")


@dataclass
class TrainReport:
    """Loss curve and singular-value audit of a training run."""

    loss_history: List[float] = field(default_factory=list)
    sv_audit_history: List[Dict[str, float]] = field(default_factory=list)
    wall_time: float = 0.0
    stopped_reason: str = "epochs"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "loss_history": self.loss_history,
            "sv_audit_history": self.sv_audit_history,
            "wall_time": self.wall_time,
            "stopped_reason": self.stopped_reason,
            "epochs_run": len(self.loss_history),
            "final_loss": self.loss_history[-1] if self.loss_history else None,
        }


@dataclass
class StateStats:
    state: str
    mean: float
    sd: float
    max: float


@dataclass
class MetricsTable:
    """Trajectory error and iteration statistics for one method on one split."""

    method: str
    split: str
    errors: List[StateStats]
    iterations: StateStats

    def rows(self) -> List[Tuple[str, str, str, str, float]]:
        out = []
        for stats in self.errors + [self.iterations]:
            out.append((self.method, self.split, "mean", stats.state, stats.mean))
            out.append((self.method, self.split, "sd", stats.state, stats.sd))
            out.append((self.method, self.split, "max", stats.state, stats.max))
        return out


@dataclass
class VectorFieldGrid:
    """Displacement Phi(k2, x) - k2 sampled on a 2-d grid of k2 components."""

    anchor: np.ndarray
    axes: Tuple[int, int]
    k_i: np.ndarray
    k_j: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    fixed_point: np.ndarray

    @property
    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


@dataclass
class TrajectoryOverlay:
    """Several trajectories of the same system on one time grid, keyed by method label."""

    series: Dict[str, TrajectoryRecord]
    state_names: Tuple[str, ...] = ()
    title: str = ""


@dataclass
class SingularValueSpectra:
    """All singular values of each weight matrix, keyed by layer name."""

    spectra: Dict[str, np.ndarray]
    title: str = ""
