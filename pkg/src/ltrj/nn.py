"""Feedforward ReLU network: parameters, forward pass, softmax cross-entropy and backprop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class NumericError(ArithmeticError):
    """A non-finite value appeared; ``layer`` is the 1-based layer index (0 = loss)."""

    def __init__(self, message: str, layer: int):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class Architecture:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 3:
            raise ValueError(f"need at least two layers, got dims={dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all widths must be positive, got dims={dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.dims[1:-1]

    @property
    def num_params(self) -> int:
        return sum(self.dims[i] * (self.dims[i - 1] + 1) for i in range(1, len(self.dims)))


@dataclass(frozen=True, eq=False)
class Params:
    """Weights W_i (d_i x d_{i-1}) and biases b_i (d_i,) of an L-layer MLP.

    Treated as an immutable value: operations return new instances and never
    write into the arrays of their inputs.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.asarray(w) for w in self.weights)
        bs = tuple(np.asarray(b) for b in self.biases)
        if len(ws) != len(bs) or len(ws) < 2:
            raise ValueError("weights and biases must be equal-length with at least two layers")
        for i, (w, b) in enumerate(zip(ws, bs), start=1):
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise ValueError(f"layer {i}: bad shapes W{w.shape} b{b.shape}")
            if i > 1 and w.shape[1] != ws[i - 2].shape[0]:
                raise ValueError(f"layer {i}: input width {w.shape[1]} != previous output {ws[i - 2].shape[0]}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @classmethod
    def from_layers(cls, layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> "Params":
        return cls(tuple(w for w, _ in layers), tuple(b for _, b in layers))

    @classmethod
    def zeros(cls, arch: Architecture, dtype=np.float32) -> "Params":
        d = arch.dims
        return cls(
            tuple(np.zeros((d[i], d[i - 1]), dtype) for i in range(1, len(d))),
            tuple(np.zeros(d[i], dtype) for i in range(1, len(d))),
        )

    @classmethod
    def from_flat(cls, arch: Architecture, vec: np.ndarray) -> "Params":
        vec = np.asarray(vec)
        if vec.shape != (arch.num_params,):
            raise ValueError(f"expected flat vector of length {arch.num_params}, got {vec.shape}")
        ws, bs, k = [], [], 0
        d = arch.dims
        for i in range(1, len(d)):
            n = d[i] * d[i - 1]
            ws.append(vec[k:k + n].reshape(d[i], d[i - 1]).copy())
            k += n
            bs.append(vec[k:k + d[i]].copy())
            k += d[i]
        return cls(tuple(ws), tuple(bs))

    @property
    def arch(self) -> Architecture:
        return Architecture((self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights))

    @property
    def dtype(self) -> np.dtype:
        return np.result_type(*self.weights, *self.biases)

    def layers(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return iter(zip(self.weights, self.biases))

    def arrays(self) -> Iterator[np.ndarray]:
        """All arrays in canonical order W_1, b_1, ..., W_L, b_L."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def astype(self, dtype) -> "Params":
        return Params(tuple(w.astype(dtype) for w in self.weights), tuple(b.astype(dtype) for b in self.biases))

    def map(self, fn) -> "Params":
        return Params(tuple(fn(w) for w in self.weights), tuple(fn(b) for b in self.biases))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def same_shape(self, other: "Params") -> bool:
        return len(self.weights) == len(other.weights) and all(
            a.shape == b.shape for a, b in zip(self.arrays(), other.arrays())
        )

    def bit_equal(self, other: "Params") -> bool:
        return self.same_shape(other) and all(
            a.dtype == b.dtype and a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays())
        )

    def _zip(self, other: "Params", fn) -> "Params":
        check_same_shape(self, other)
        return Params(
            tuple(fn(a, b) for a, b in zip(self.weights, other.weights)),
            tuple(fn(a, b) for a, b in zip(self.biases, other.biases)),
        )

    def __add__(self, other: "Params") -> "Params":
        return self._zip(other, np.add)

    def __sub__(self, other: "Params") -> "Params":
        return self._zip(other, np.subtract)

    def __mul__(self, scalar: float) -> "Params":
        return self.map(lambda a: a * a.dtype.type(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Params":
        return self.map(np.negative)


def check_same_shape(x: Params, y: Params) -> None:
    if not x.same_shape(y):
        raise ValueError(f"parameter shapes differ: {x.arch.dims} vs {y.arch.dims}")


def axpy(a: float, x: Params, y: Params) -> Params:
    """Return ``y + a * x``."""
    check_same_shape(x, y)
    return y + x * a


def dot(x: Params, y: Params) -> float:
    check_same_shape(x, y)
    return float(sum(np.dot(a.ravel().astype(np.float64), b.ravel().astype(np.float64))
                     for a, b in zip(x.arrays(), y.arrays())))


def sq_norm(x: Params) -> float:
    return dot(x, x)


def l2_dist(x: Params, y: Params) -> float:
    check_same_shape(x, y)
    total = 0.0
    for a, b in zip(x.arrays(), y.arrays()):
        d = a.astype(np.float64) - b.astype(np.float64)
        total += float(np.dot(d.ravel(), d.ravel()))
    return float(np.sqrt(total))


def init_params(arch: Architecture, seed: int, dtype=np.float32) -> Params:
    """Kaiming fan-in normal weights (std sqrt(2 / d_{i-1})), zero biases."""
    rng = np.random.default_rng(seed)
    d = arch.dims
    ws = tuple((rng.standard_normal((d[i], d[i - 1])) * np.sqrt(2.0 / d[i - 1])).astype(dtype)
               for i in range(1, len(d)))
    bs = tuple(np.zeros(d[i], dtype) for i in range(1, len(d)))
    return Params(ws, bs)


def _as_inputs(params: Params, inputs) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim == 1:
        x = x[None, :]
    d0 = params.weights[0].shape[1]
    if x.ndim != 2 or x.shape[1] != d0:
        raise ValueError(f"input width {x.shape[-1] if x.ndim else None} does not match d_0={d0}")
    return x.astype(params.dtype, copy=False)


def _forward_cache(params: Params, x: np.ndarray):
    acts = [x]
    pre = []
    last = len(params.weights)
    for i, (w, b) in enumerate(params.layers(), start=1):
        with np.errstate(over="ignore", invalid="ignore"):
            z = acts[-1] @ w.T + b
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite pre-activation in layer {i}", i)
        pre.append(z)
        acts.append(np.maximum(z, 0) if i < last else z)
    return acts, pre


def forward(params: Params, inputs) -> np.ndarray:
    """Logits (b x d_L) for a batch of inputs (b x d_0)."""
    x = _as_inputs(params, inputs)
    acts, _ = _forward_cache(params, x)
    return acts[-1]


def _check_labels(labels, n: int, classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,) or n < 1:
        raise ValueError(f"labels must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer) or (y.min() < 0) or (y.max() >= classes):
        raise ValueError(f"labels must be integers in [0, {classes})")
    return y.astype(np.int64, copy=False)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    logp = _log_softmax(logits)
    return float(-np.mean(logp[np.arange(len(labels)), labels], dtype=np.float64))


def loss(params: Params, inputs, labels) -> float:
    x = _as_inputs(params, inputs)
    y = _check_labels(labels, x.shape[0], params.weights[-1].shape[0])
    return cross_entropy(forward(params, x), y)


def loss_and_grad(params: Params, inputs, labels) -> tuple[float, Params]:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    x = _as_inputs(params, inputs)
    n = x.shape[0]
    y = _check_labels(labels, n, params.weights[-1].shape[0])
    acts, pre = _forward_cache(params, x)

    logp = _log_softmax(acts[-1])
    value = float(-np.mean(logp[np.arange(n), y], dtype=np.float64))
    if not np.isfinite(value):
        raise NumericError("non-finite loss", 0)

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1
    delta /= delta.dtype.type(n)

    L = len(params.weights)
    gw: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    for i in range(L - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (pre[i - 1] > 0)
    return value, Params(tuple(gw), tuple(gb))


def predict(params: Params, inputs) -> np.ndarray:
    return forward(params, inputs).argmax(axis=1)
