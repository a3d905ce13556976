"""
Base class for dynamical systems d/dt x = f(x).

Concrete systems provide the right-hand side and its analytic Jacobian;
dimension checks, read-only parameters and the shared evaluation entry
points live here.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Tuple

import numpy as np

from app.conns.exceptions import ArgumentError


def as_state(x: Any, n: int, what: str = "state") -> np.ndarray:
    """Convert x to a float vector of length n, raising ArgumentError otherwise."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ArgumentError(f"Expected {what} of length {n}, got shape {arr.shape}")
    return arr


class DynamicalSystem(ABC):
    """
    Abstract time-invariant ODE system of dimension n.

    Instances are immutable after construction and can be shared
    between worker threads.
    """

    name: str = ""  # Subclasses must set this

    def __init__(self, params: Dict[str, Any]):
        self.params = {key: _freeze(value) for key, value in params.items()}

    @property
    @abstractmethod
    def n(self) -> int:
        """State dimension."""

    @property
    def state_names(self) -> Tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.n))

    @abstractmethod
    def _rhs(self, x: np.ndarray) -> np.ndarray:
        """Evaluate f(x) for a validated state."""

    @abstractmethod
    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        """Evaluate df/dx for a validated state."""

    def rhs(self, x: Any) -> np.ndarray:
        return self._rhs(as_state(x, self.n))

    def jacobian(self, x: Any) -> np.ndarray:
        return self._jacobian(as_state(x, self.n))

    def default_base_state(self) -> np.ndarray:
        """Nominal initial condition around which trajectories are sampled."""
        return np.zeros(self.n)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in self.params.items()},
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n})"


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple, np.ndarray)):
        arr = np.array(value, dtype=float)
        arr.setflags(write=False)
        return arr
    return value


def eval_rhs(system: DynamicalSystem, x: Any) -> np.ndarray:
    """Evaluate f(x); raises ArgumentError on a dimension mismatch."""
    return system.rhs(x)


def eval_jacobian(system: DynamicalSystem, x: Any) -> np.ndarray:
    """Evaluate the analytic Jacobian df/dx; raises ArgumentError on a dimension mismatch."""
    return system.jacobian(x)
