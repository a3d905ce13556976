"""
Seeded Gaussian sampling of initial conditions.
"""

from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from app.conns.exceptions import ArgumentError


@dataclass
class InitialConditionSampler:
    """
    Draws base + scale * N(0, I) with a private random stream.

    A sampler is single-owner; use ``for_trajectory`` to derive an
    independent stream per trajectory for parallel generation.
    """

    base: np.ndarray
    perturbation_scale: np.ndarray
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.base = np.asarray(self.base, dtype=float)
        self.perturbation_scale = np.broadcast_to(
            np.asarray(self.perturbation_scale, dtype=float), self.base.shape
        ).copy()
        if np.any(self.perturbation_scale < 0):
            raise ArgumentError("Perturbation scale must be non-negative componentwise")
        self._rng = np.random.default_rng(self._seed_entropy())

    def _seed_entropy(self) -> Union[int, Sequence[int]]:
        return self.seed

    def sample(self) -> np.ndarray:
        return self.base + self.perturbation_scale * self._rng.standard_normal(self.base.shape[0])

    def for_trajectory(self, trajectory_id: int) -> "InitialConditionSampler":
        """Sampler whose stream depends only on (seed, trajectory_id)."""
        return _TrajectorySampler(self.base, self.perturbation_scale, self.seed, trajectory_id)

    def scaled(self, factor: float) -> "InitialConditionSampler":
        """Same base and seed with the perturbation standard deviation multiplied by ``factor``."""
        return InitialConditionSampler(self.base, self.perturbation_scale * factor, self.seed)

    def reseeded(self, seed: int) -> "InitialConditionSampler":
        return InitialConditionSampler(self.base, self.perturbation_scale, seed)


@dataclass
class _TrajectorySampler(InitialConditionSampler):
    trajectory_id: int = 0

    def _seed_entropy(self) -> Any:
        return [self.seed, self.trajectory_id]


def sample_initial_condition(sampler: InitialConditionSampler) -> np.ndarray:
    return sampler.sample()
