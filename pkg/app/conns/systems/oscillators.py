"""
Polynomial benchmark systems: the cubic oscillator, the Hopf normal form
and a linear system used for closed-form checks.
"""

from typing import Any, Dict, Optional, Tuple

import numpy as np

from app.conns.exceptions import ConfigError
from app.conns.systems.base_system import DynamicalSystem


class CubicOscillator(DynamicalSystem):
    """
    Damped cubic oscillator::

        dx/dt = -a x^3 + b y^3
        dy/dt = -b x^3 - a y^3

    with a = 0.1 and b = 2 by default.
    """

    name = "cubic_oscillator"

    def __init__(self, params: Optional[Dict[str, Any]] = None):
        params = {"damping": 0.1, "coupling": 2.0, **(params or {})}
        super().__init__(params)
        self._a = float(self.params["damping"])
        self._b = float(self.params["coupling"])

    @property
    def n(self) -> int:
        return 2

    @property
    def state_names(self) -> Tuple[str, ...]:
        return ("x", "y")

    def _rhs(self, x: np.ndarray) -> np.ndarray:
        u, v = x
        return np.array([-self._a * u**3 + self._b * v**3, -self._b * u**3 - self._a * v**3])

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        u, v = x
        return np.array(
            [
                [-3.0 * self._a * u**2, 3.0 * self._b * v**2],
                [-3.0 * self._b * u**2, -3.0 * self._a * v**2],
            ]
        )

    def default_base_state(self) -> np.ndarray:
        return np.array([1.0, 0.5])


class HopfNormalForm(DynamicalSystem):
    """
    Hopf bifurcation with the bifurcation parameter carried as a state::

        dmu/dt = 0
        dx/dt  = mu x + y - x (x^2 + y^2)
        dy/dt  = mu y - x - y (x^2 + y^2)

    State order is (mu, x, y). Trajectories with mu > 0 approach a limit
    cycle of radius sqrt(mu); mu < 0 decays to the origin.
    """

    name = "hopf"

    def __init__(self, params: Optional[Dict[str, Any]] = None):
        super().__init__(params or {})

    @property
    def n(self) -> int:
        return 3

    @property
    def state_names(self) -> Tuple[str, ...]:
        return ("mu", "x", "y")

    def _rhs(self, x: np.ndarray) -> np.ndarray:
        mu, u, v = x
        r2 = u * u + v * v
        return np.array([0.0, mu * u + v - u * r2, mu * v - u - v * r2])

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        mu, u, v = x
        return np.array(
            [
                [0.0, 0.0, 0.0],
                [u, mu - 3.0 * u * u - v * v, 1.0 - 2.0 * u * v],
                [v, -1.0 - 2.0 * u * v, mu - u * u - 3.0 * v * v],
            ]
        )

    def default_base_state(self) -> np.ndarray:
        return np.array([0.0, 1.0, 0.0])


class LinearSystem(DynamicalSystem):
    """dx/dt = A x for a constant square matrix A."""

    name = "linear"

    def __init__(self, params: Optional[Dict[str, Any]] = None):
        params = params or {}
        if "A" not in params:
            raise ConfigError("Linear system requires parameter 'A'")
        A = np.atleast_2d(np.array(params["A"], dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError(f"Linear system matrix must be square, got shape {A.shape}")
        super().__init__({"A": A})
        self._A = self.params["A"]

    @property
    def n(self) -> int:
        return self._A.shape[0]

    def _rhs(self, x: np.ndarray) -> np.ndarray:
        return self._A @ x

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.array(self._A)

    def default_base_state(self) -> np.ndarray:
        return np.ones(self.n)
