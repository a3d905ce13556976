"""
Newton-step training data harvested from integrator traces.

Every Newton iteration k2^(i) -> k2^(i+1) at anchor state x becomes one
sample ((k2_in, x) -> k2_out). Samples are stored column-wise in numpy
arrays; ``Dataset.samples`` gives the row view.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .codec import pack_arrays, read_container, unpack_arrays, write_container
from .exceptions import ArgumentError, FormatError, SolverError
from .integrator import newton_update, simulate
from .logging_config import setup_logger
from .models import NewtonConfig, TrajectoryRecord
from .systems.base_system import DynamicalSystem
from .systems.sampler import InitialConditionSampler

logger = setup_logger()

DATASET_MAGIC = b"CNNS"
DATASET_VERSION = 1


@dataclass
class StepSample:
    x: np.ndarray
    k2_in: np.ndarray
    k2_out: np.ndarray
    trajectory_id: int
    time_index: int


@dataclass
class Dataset:
    """Newton pairs of one system at a fixed dt and solver tolerance."""

    x: np.ndarray
    k2_in: np.ndarray
    k2_out: np.ndarray
    trajectory_ids: np.ndarray
    time_indices: np.ndarray
    system_name: str
    dt: float
    newton_tol: float
    trajectory_count: int
    seed: int
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        count = self.trajectory_ids.shape[0]
        for name in ("x", "k2_in", "k2_out"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != count:
                raise ArgumentError(f"Dataset column '{name}' has shape {arr.shape}, expected ({count}, n)")
        if count and int(self.trajectory_ids.max()) >= self.trajectory_count:
            raise ArgumentError("Dataset contains a trajectory id outside trajectory_count")

    def __len__(self) -> int:
        return int(self.trajectory_ids.shape[0])

    @property
    def n(self) -> int:
        return int(self.x.shape[1])

    @property
    def samples(self) -> List[StepSample]:
        return [
            StepSample(self.x[i], self.k2_in[i], self.k2_out[i], int(self.trajectory_ids[i]), int(self.time_indices[i]))
            for i in range(len(self))
        ]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            x=self.x[mask],
            k2_in=self.k2_in[mask],
            k2_out=self.k2_out[mask],
            trajectory_ids=self.trajectory_ids[mask],
            time_indices=self.time_indices[mask],
            system_name=self.system_name,
            dt=self.dt,
            newton_tol=self.newton_tol,
            trajectory_count=self.trajectory_count,
            seed=self.seed,
            extra=dict(self.extra),
        )

    def metadata(self) -> Dict[str, Any]:
        return {
            "system_name": self.system_name,
            "dt": self.dt,
            "newton_tol": self.newton_tol,
            "trajectory_count": self.trajectory_count,
            "seed": self.seed,
            "extra": self.extra,
        }

    def equals(self, other: "Dataset") -> bool:
        """Bitwise equality of all arrays plus equal metadata."""
        return self.metadata() == other.metadata() and all(
            a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
            for a, b in zip(self._columns(), other._columns())
        )

    def initial_conditions(self) -> Dict[int, np.ndarray]:
        """Starting state of every trajectory that has samples in this dataset."""
        recorded = self.extra.get("initial_conditions") or []
        present = sorted(set(self.trajectory_ids.tolist()))
        return {tid: np.asarray(recorded[tid], dtype=float) for tid in present if tid < len(recorded)}

    def _columns(self) -> Tuple[np.ndarray, ...]:
        return (self.x, self.k2_in, self.k2_out, self.trajectory_ids, self.time_indices)

    @classmethod
    def empty(cls, n: int, **metadata: Any) -> "Dataset":
        return cls(
            x=np.empty((0, n)),
            k2_in=np.empty((0, n)),
            k2_out=np.empty((0, n)),
            trajectory_ids=np.empty(0, dtype=np.int64),
            time_indices=np.empty(0, dtype=np.int64),
            **metadata,
        )


def _trajectory_rows(
    system: DynamicalSystem, record: TrajectoryRecord, trajectory_id: int, include_fixed_point_pairs: bool
) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray, int, int]]:
    rows = []
    for t_idx, trace in enumerate(record.traces or []):
        if trace is None:
            # subdivided step: its pairs belong to a smaller dt
            logger.warning("Dataset: skipping subdivided step %s of trajectory %s", t_idx, trajectory_id)
            continue
        for k_in, k_out in zip(trace.iterates[:-1], trace.iterates[1:]):
            rows.append((trace.x, k_in, k_out, trajectory_id, t_idx))
        if include_fixed_point_pairs:
            k1 = system.rhs(trace.x)
            k_star = trace.k2_star
            rows.append((trace.x, k_star, newton_update(system, trace.x, k1, k_star, trace.dt), trajectory_id, t_idx))
    return rows


def generate_dataset(
    system: DynamicalSystem,
    sampler: InitialConditionSampler,
    n_traj: int,
    dt: float,
    t_end: float,
    cfg: NewtonConfig,
    include_fixed_point_pairs: bool = True,
    workers: int = 1,
) -> Dataset:
    """
    Simulate ``n_traj`` trajectories and collect every Newton iteration as a sample.

    Each step also contributes its converged pair ``(k2*, G(k2*))`` unless
    ``include_fixed_point_pairs`` is off; the sample count is then exactly the
    total Newton iteration count.

    Trajectory ``i`` starts from ``sampler.for_trajectory(i).sample()``, so the
    result does not depend on ``workers``.

    Raises:
        ArgumentError: if n_traj < 1.
        SolverError: carrying the trajectory and time index of a failed step.
    """
    if n_traj < 1:
        raise ArgumentError(f"n_traj must be >= 1, got {n_traj}")

    def run(trajectory_id: int) -> Tuple[np.ndarray, List[Tuple]]:
        x0 = sampler.for_trajectory(trajectory_id).sample()
        try:
            record = simulate(system, x0, dt, t_end, cfg, record_traces=True)
        except SolverError as e:
            raise SolverError(str(e.args[0]), time_index=e.time_index, trajectory_id=trajectory_id) from e
        return x0, _trajectory_rows(system, record, trajectory_id, include_fixed_point_pairs)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        per_trajectory = list(executor.map(run, range(n_traj)))

    rows = [row for _, chunk in per_trajectory for row in chunk]
    metadata = dict(
        system_name=system.name,
        dt=float(dt),
        newton_tol=float(cfg.tol),
        trajectory_count=n_traj,
        seed=int(sampler.seed),
        extra={
            "include_fixed_point_pairs": include_fixed_point_pairs,
            "t_end": float(t_end),
            "initial_conditions": [x0.tolist() for x0, _ in per_trajectory],
        },
    )
    if not rows:
        return Dataset.empty(system.n, **metadata)

    xs, k_in, k_out, tids, tidx = zip(*rows)
    ds = Dataset(
        x=np.array(xs),
        k2_in=np.array(k_in),
        k2_out=np.array(k_out),
        trajectory_ids=np.array(tids, dtype=np.int64),
        time_indices=np.array(tidx, dtype=np.int64),
        **metadata,
    )
    logger.info("Dataset: %s samples from %s trajectories of %s", len(ds), n_traj, system.name)
    return ds


def split_by_trajectory(ds: Dataset, test_fraction: float, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """
    Partition whole trajectories into (train, test).

    Raises:
        ArgumentError: if the fraction is outside (0, 1) or leaves one side empty.
    """
    if not 0 < test_fraction < 1:
        raise ArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(test_fraction * ds.trajectory_count))
    if n_test == 0 or n_test == ds.trajectory_count:
        raise ArgumentError(
            f"test_fraction {test_fraction} on {ds.trajectory_count} trajectories leaves one side empty"
        )
    order = np.random.default_rng(seed).permutation(ds.trajectory_count)
    test_ids = np.sort(order[:n_test])
    in_test = np.isin(ds.trajectory_ids, test_ids)
    return ds.subset(~in_test), ds.subset(in_test)


def save_dataset(ds: Dataset, path: Path) -> None:
    header = {"n": ds.n, "count": len(ds), **ds.metadata()}
    payload = pack_arrays([ds.x, ds.k2_in, ds.k2_out]) + pack_arrays([ds.trajectory_ids, ds.time_indices], dtype="<i8")
    write_container(path, DATASET_MAGIC, DATASET_VERSION, header, payload)


def load_dataset(path: Path) -> Dataset:
    """
    Read a dataset written by save_dataset.

    Raises:
        FormatError: with a byte offset for bad magic, version, header or payload.
    """
    header, payload = read_container(path, DATASET_MAGIC, DATASET_VERSION)
    try:
        n, count = int(header["n"]), int(header["count"])
        metadata = {key: header[key] for key in ("system_name", "dt", "newton_tol", "trajectory_count", "seed")}
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Dataset header is missing or has a bad field: {e}") from e

    floats, offset = unpack_arrays(payload, [(count, n)] * 3)
    ints, offset = unpack_arrays(payload, [(count,), (count,)], dtype="<i8", offset=offset)
    if offset != len(payload):
        raise FormatError(f"Dataset payload has {len(payload) - offset} trailing bytes", offset=offset)

    try:
        return Dataset(*floats, *ints, extra=header.get("extra", {}), **metadata)
    except ArgumentError as e:
        raise FormatError(f"Inconsistent dataset file: {e}") from e


def export_csv(ds: Dataset, path: Path) -> None:
    """Write samples as text with header ``traj,t_idx,x*,k2_in*,k2_out*``; lossy beyond 17 digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    idx = range(1, ds.n + 1)
    header = ["traj", "t_idx", *(f"x{i}" for i in idx), *(f"k2_in{i}" for i in idx), *(f"k2_out{i}" for i in idx)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(len(ds)):
            values = np.concatenate([ds.x[i], ds.k2_in[i], ds.k2_out[i]])
            writer.writerow([int(ds.trajectory_ids[i]), int(ds.time_indices[i]), *(format(v, ".17g") for v in values)])


@dataclass
class Standardizer:
    """
    Affine input/output transform fitted on a dataset.

    k2 is divided by one scalar so that contraction in k2 is preserved in the
    2-norm; x is standardized per component.
    """

    k2_scale: float
    x_mean: np.ndarray
    x_std: np.ndarray

    @classmethod
    def fit(cls, ds: Dataset) -> "Standardizer":
        if len(ds) == 0:
            raise ArgumentError("Cannot fit a standardizer on an empty dataset")
        k2 = np.concatenate([ds.k2_in, ds.k2_out])
        scale = float(np.sqrt(np.mean(k2**2)))
        std = ds.x.std(axis=0)
        return cls(k2_scale=scale if scale > 0 else 1.0, x_mean=ds.x.mean(axis=0), x_std=np.where(std > 0, std, 1.0))

    def transform(self, k2: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return k2 / self.k2_scale, (x - self.x_mean) / self.x_std

    def to_dict(self) -> Dict[str, Any]:
        return {"k2_scale": self.k2_scale, "x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist()}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> Optional["Standardizer"]:
        if not data:
            return None
        return cls(float(data["k2_scale"]), np.asarray(data["x_mean"], dtype=float), np.asarray(data["x_std"], dtype=float))
