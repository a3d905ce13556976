"""
Reduced swing-equation network of coupled generators.

For every generator i in the index set::

    d delta_i / dt = omega_i
    d omega_i / dt = p_i - d_i omega_i - sum_j B_ij sin(delta_i - delta_j)

State order is (delta_1..delta_N, omega_1..omega_N); angles in radians,
speeds in rad/s relative to the synchronous frame.
"""

from functools import cached_property
from typing import Any, Dict, Tuple

import numpy as np
from scipy.optimize import fsolve

from app.conns.exceptions import ConfigError
from app.conns.logging_config import setup_logger
from app.conns.systems.base_system import DynamicalSystem

logger = setup_logger()

REQUIRED_PARAMS = ("p", "d", "B")
EQUILIBRIUM_TOL = 1e-8


class KundurSystem(DynamicalSystem):
    name = "kundur"

    def __init__(self, params: Dict[str, Any]):
        missing = [key for key in REQUIRED_PARAMS if key not in (params or {})]
        if missing:
            raise ConfigError(f"Kundur system is missing parameters: {', '.join(missing)}")

        p = np.asarray(params["p"], dtype=float)
        d = np.asarray(params["d"], dtype=float)
        B = np.asarray(params["B"], dtype=float)
        generators = params.get("generators", list(range(p.shape[0])))

        if p.ndim != 1 or d.shape != p.shape or B.shape != (p.shape[0], p.shape[0]):
            raise ConfigError(f"Kundur parameter shapes disagree: p {p.shape}, d {d.shape}, B {B.shape}")
        try:
            idx = np.asarray(generators, dtype=int)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid generator index set: {generators}") from e
        if idx.ndim != 1 or idx.size == 0 or idx.min() < 0 or idx.max() >= p.shape[0] or len(set(idx.tolist())) != idx.size:
            raise ConfigError(f"Invalid generator index set: {generators}")
        if not np.allclose(B, B.T):
            logger.warning("KundurSystem: coupling matrix B is not symmetric")

        super().__init__({"p": p, "d": d, "B": B, "generators": idx.tolist()})
        self._p = p[idx]
        self._d = d[idx]
        self._B = B[np.ix_(idx, idx)]
        self._N = idx.size
        for arr in (self._p, self._d, self._B):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return 2 * self._N

    @property
    def machines(self) -> int:
        return self._N

    @property
    def state_names(self) -> Tuple[str, ...]:
        return tuple(f"delta{i + 1}" for i in range(self._N)) + tuple(f"omega{i + 1}" for i in range(self._N))

    def _rhs(self, x: np.ndarray) -> np.ndarray:
        delta, omega = x[: self._N], x[self._N:]
        diff = delta[:, None] - delta[None, :]
        flow = np.sum(self._B * np.sin(diff), axis=1)
        return np.concatenate([omega, self._p - self._d * omega - flow])

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        N = self._N
        delta = x[:N]
        diff = delta[:, None] - delta[None, :]
        C = self._B * np.cos(diff)

        J = np.zeros((2 * N, 2 * N))
        J[:N, N:] = np.eye(N)
        # d omega_i / d delta_j = B_ij cos(delta_i - delta_j), diagonal = -sum_{j != i}
        J[N:, :N] = C - np.diag(C.sum(axis=1))
        J[N:, N:] = -np.diag(self._d)
        return J

    @cached_property
    def _equilibrium(self) -> np.ndarray:
        N = self._N

        def angles(free: np.ndarray) -> np.ndarray:
            return np.concatenate([[0.0], free])

        def residual(free: np.ndarray) -> np.ndarray:
            return self._rhs(np.concatenate([angles(free), np.zeros(N)]))[N + 1:]

        def residual_jacobian(free: np.ndarray) -> np.ndarray:
            return self._jacobian(np.concatenate([angles(free), np.zeros(N)]))[N + 1:, 1:N]

        free = np.zeros(0)
        if N > 1:
            free, _, ier, msg = fsolve(residual, np.zeros(N - 1), fprime=residual_jacobian, xtol=1e-14, full_output=True)
            if ier != 1:
                raise ConfigError(f"Kundur system has no equilibrium near zero angles: {msg}")
        x_eq = np.concatenate([angles(free), np.zeros(N)])
        res = float(np.max(np.abs(self._rhs(x_eq))))
        if res > EQUILIBRIUM_TOL:
            raise ConfigError(
                f"Kundur system has no equilibrium: residual {res:.3e} at the solved angles (sum of p is {self._p.sum():.3e})"
            )
        logger.debug("KundurSystem: equilibrium residual %s", res)
        return x_eq

    def equilibrium(self) -> np.ndarray:
        """
        Operating point with delta_1 = 0 and all speeds zero.

        Raises:
            ConfigError: if no stationary point exists, e.g. when sum(p) != 0.
        """
        return self._equilibrium.copy()

    def default_base_state(self) -> np.ndarray:
        return self.equilibrium()
