"""
The recurrent network k2^(i+1) = Phi(k2^(i), x).

Layer 1 combines both inputs, ``z1 = W1 k2 + U x + b1``; layers 2..h-1 are
``z = W a + b``; layer h maps back to the state dimension. Hidden layers use
ReLU; the last layer is linear unless ``final_linear`` is off.

Everything here works on batches: rows are samples.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .codec import pack_arrays, read_container, unpack_arrays, write_container
from .dataset import Dataset, Standardizer, StepSample
from .exceptions import ArgumentError, FormatError
from .linalg import max_singular_value
from .models import Architecture, ModelMetadata

MODEL_MAGIC = b"CNNM"
MODEL_VERSION = 1

Batch = Union[Dataset, Sequence[StepSample]]


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_grad(z: np.ndarray) -> np.ndarray:
    # the subgradient at exactly 0 is taken as 0
    return (z > 0.0).astype(float)


@dataclass
class NetworkParams:
    """Weights of an h-layer network on states of dimension n with hidden width m."""

    n: int
    m: int
    h: int
    W1: np.ndarray
    U: np.ndarray
    W: List[np.ndarray]
    Wh: np.ndarray
    b: List[np.ndarray]
    final_linear: bool = True
    normalization: Optional[Dict] = None
    meta: ModelMetadata = field(default_factory=ModelMetadata)

    def __post_init__(self) -> None:
        if self.h < 2:
            raise ArgumentError(f"A network needs at least 2 weight layers, got h={self.h}")
        expected = self.expected_shapes(self.n, self.m, self.h)
        for name, tensor, shape in zip(self.tensor_names(), self.tensors(), expected):
            if tensor.shape != shape:
                raise ArgumentError(f"{name} has shape {tensor.shape}, expected {shape}")

    @staticmethod
    def expected_shapes(n: int, m: int, h: int) -> List[Tuple[int, ...]]:
        return (
            [(m, n), (m, n)]
            + [(m, m)] * (h - 2)
            + [(n, m)]
            + [(m,)] * (h - 1)
            + [(n,)]
        )

    def tensor_names(self) -> List[str]:
        return ["W1", "U"] + [f"W{i}" for i in range(2, self.h)] + [f"W{self.h}"] + [f"b{i}" for i in range(1, self.h + 1)]

    def tensors(self) -> List[np.ndarray]:
        """All parameters in declaration order: W1, U, W2..W_{h-1}, Wh, b1..bh."""
        return [self.W1, self.U, *self.W, self.Wh, *self.b]

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "NetworkParams":
        tensors = list(tensors)
        k = self.h - 2
        return replace(
            self,
            W1=tensors[0],
            U=tensors[1],
            W=tensors[2 : 2 + k],
            Wh=tensors[2 + k],
            b=tensors[3 + k :],
        )

    def layer_weights(self) -> List[Tuple[str, np.ndarray]]:
        """The matrices acting on k2 and hidden activations, named W1..Wh; U is excluded."""
        return [("W1", self.W1)] + [(f"W{i}", W) for i, W in enumerate(self.W, start=2)] + [(f"W{self.h}", self.Wh)]

    def with_layer_weights(self, weights: Sequence[np.ndarray]) -> "NetworkParams":
        weights = list(weights)
        return replace(self, W1=weights[0], W=weights[1:-1], Wh=weights[-1])

    @property
    def standardizer(self) -> Optional[Standardizer]:
        return Standardizer.from_dict(self.normalization)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())


def init_params(n: int, arch: Architecture, seed: int = 0) -> NetworkParams:
    """
    He-uniform weights scaled by fan-in, zero biases.

    Layer 1 sees the concatenation (k2, x), so its fan-in is 2n.
    """
    rng = np.random.default_rng(seed)
    m, h = arch.width, arch.h

    def uniform(shape: Tuple[int, int], fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    return NetworkParams(
        n=n,
        m=m,
        h=h,
        W1=uniform((m, n), 2 * n),
        U=uniform((m, n), 2 * n),
        W=[uniform((m, m), m) for _ in range(h - 2)],
        Wh=uniform((n, m), m),
        b=[np.zeros(m) for _ in range(h - 1)] + [np.zeros(n)],
        final_linear=arch.final_linear,
    )


def _normalized_inputs(p: NetworkParams, K2: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    std = p.standardizer
    if std is None:
        return K2, X, 1.0
    K2n, Xn = std.transform(K2, X)
    return K2n, Xn, std.k2_scale


def forward_with_cache(p: NetworkParams, K2: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray], float]:
    """Batched forward pass returning the output, pre-activations z_i and layer inputs a_{i-1}."""
    K2n, Xn, scale = _normalized_inputs(p, K2, X)
    inputs = [K2n]
    pre = [K2n @ p.W1.T + Xn @ p.U.T + p.b[0]]
    for W, b in zip(p.W, p.b[1:-1]):
        a = relu(pre[-1])
        inputs.append(a)
        pre.append(a @ W.T + b)
    a = relu(pre[-1])
    inputs.append(a)
    pre.append(a @ p.Wh.T + p.b[-1])
    out = pre[-1] if p.final_linear else relu(pre[-1])
    return scale * out, pre, inputs, scale


def forward_batch(p: NetworkParams, K2: np.ndarray, X: np.ndarray) -> np.ndarray:
    K2 = np.atleast_2d(np.asarray(K2, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if K2.shape[1] != p.n or X.shape != K2.shape:
        raise ArgumentError(f"Expected k2 and x batches of width {p.n}, got {K2.shape} and {X.shape}")
    return forward_with_cache(p, K2, X)[0]


def forward(p: NetworkParams, k2, x) -> np.ndarray:
    """Phi(k2, x) for single state vectors."""
    k2 = np.asarray(k2, dtype=float)
    x = np.asarray(x, dtype=float)
    if k2.shape != (p.n,) or x.shape != (p.n,):
        raise ArgumentError(f"Expected k2 and x of length {p.n}, got shapes {k2.shape} and {x.shape}")
    return forward_batch(p, k2[None, :], x[None, :])[0]


def batch_arrays(batch: Batch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(k2_in, x, k2_out) arrays of a dataset or a list of samples."""
    if isinstance(batch, Dataset):
        arrays = batch.k2_in, batch.x, batch.k2_out
    else:
        if len(batch) == 0:
            raise ArgumentError("Empty batch")
        arrays = (
            np.array([s.k2_in for s in batch], dtype=float),
            np.array([s.x for s in batch], dtype=float),
            np.array([s.k2_out for s in batch], dtype=float),
        )
    if arrays[0].shape[0] == 0:
        raise ArgumentError("Empty batch")
    return arrays


def loss_mse(p: NetworkParams, batch: Batch) -> float:
    """Mean over samples of the squared 2-norm of the prediction error."""
    K2, X, target = batch_arrays(batch)
    diff = forward_batch(p, K2, X) - target
    return float(np.mean(np.sum(diff**2, axis=1)))


def loss_and_gradient_arrays(p: NetworkParams, K2: np.ndarray, X: np.ndarray, target: np.ndarray) -> Tuple[float, NetworkParams]:
    out, pre, inputs, scale = forward_with_cache(p, K2, X)
    N = K2.shape[0]
    diff = out - target
    loss = float(np.mean(np.sum(diff**2, axis=1)))

    delta = (2.0 / N) * scale * diff
    if not p.final_linear:
        delta = delta * relu_grad(pre[-1])

    weights = [p.W1, *p.W, p.Wh]
    grad_W: List[np.ndarray] = [None] * p.h
    grad_b: List[np.ndarray] = [None] * p.h
    for layer in range(p.h - 1, -1, -1):
        grad_W[layer] = delta.T @ inputs[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer]) * relu_grad(pre[layer - 1])

    Xn = _normalized_inputs(p, K2, X)[1]
    grad_U = delta.T @ Xn
    grads = [grad_W[0], grad_U, *grad_W[1:-1], grad_W[-1], *grad_b]
    return loss, p.with_tensors(grads)


def loss_and_gradient(p: NetworkParams, batch: Batch) -> Tuple[float, NetworkParams]:
    """Loss and its exact gradient in one forward/backward pass."""
    return loss_and_gradient_arrays(p, *batch_arrays(batch))


def gradient(p: NetworkParams, batch: Batch) -> NetworkParams:
    """
    Reverse-mode gradient of loss_mse, packed in a NetworkParams of the same shapes.
    """
    return loss_and_gradient(p, batch)[1]


def max_singular_values(p: NetworkParams) -> Dict[str, float]:
    """Largest singular value of W1, W2..W_{h-1} and Wh, keyed by layer name."""
    return {name: max_singular_value(W) for name, W in p.layer_weights()}


def save_model(p: NetworkParams, path: Path) -> None:
    header = {
        "n": p.n,
        "m": p.m,
        "h": p.h,
        "final_linear": p.final_linear,
        "normalization": p.normalization,
        "meta": p.meta.to_dict(),
        "tensors": p.tensor_names(),
    }
    write_container(path, MODEL_MAGIC, MODEL_VERSION, header, pack_arrays(p.tensors()))


def load_model(path: Path) -> NetworkParams:
    """
    Read a checkpoint written by save_model.

    Raises:
        FormatError: for bad magic, version, header fields or tensor sizes.
    """
    header, payload = read_container(path, MODEL_MAGIC, MODEL_VERSION)
    try:
        n, m, h = int(header["n"]), int(header["m"]), int(header["h"])
        final_linear = bool(header["final_linear"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Checkpoint header is missing or has a bad field: {e}") from e
    if n < 1 or m < 1 or h < 2:
        raise FormatError(f"Checkpoint has an invalid architecture n={n}, m={m}, h={h}")

    tensors, offset = unpack_arrays(payload, NetworkParams.expected_shapes(n, m, h))
    if offset != len(payload):
        raise FormatError(f"Checkpoint payload has {len(payload) - offset} bytes beyond the declared tensors", offset=offset)

    k = h - 2
    return NetworkParams(
        n=n,
        m=m,
        h=h,
        W1=tensors[0],
        U=tensors[1],
        W=tensors[2 : 2 + k],
        Wh=tensors[2 + k],
        b=tensors[3 + k :],
        final_linear=final_linear,
        normalization=header.get("normalization"),
        meta=ModelMetadata.from_dict(header.get("meta") or {}),
    )
