"""Hidden-unit permutations and their action on MLP parameters.

A permutation ``pi`` is one bijection per hidden layer; ``pi.sigmas[i][j]`` is
the new position of unit ``j`` in hidden layer ``i + 1``.  Acting on
parameters it moves row ``j`` of ``W_i``/``b_i`` to row ``sigma_i[j]`` and
column ``j`` of ``W_{i+1}`` to column ``sigma_i[j]``.  Output classes are
never permuted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import Architecture, Params


@dataclass(frozen=True, eq=False)
class Permutation:
    sigmas: tuple[np.ndarray, ...]

    def __post_init__(self):
        sig = []
        for i, s in enumerate(self.sigmas):
            s = np.asarray(s, dtype=np.int64)
            if s.ndim != 1 or not np.array_equal(np.sort(s), np.arange(len(s))):
                raise ValueError(f"sigma {i} is not a bijection on 0..{len(s) - 1}")
            s.setflags(write=False)
            sig.append(s)
        object.__setattr__(self, "sigmas", tuple(sig))

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sigmas)

    def inverse_sigmas(self) -> tuple[np.ndarray, ...]:
        return tuple(np.argsort(s) for s in self.sigmas)

    def is_identity(self) -> bool:
        return all(np.array_equal(s, np.arange(len(s))) for s in self.sigmas)

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and self.widths == other.widths and all(
            np.array_equal(a, b) for a, b in zip(self.sigmas, other.sigmas))

    def __hash__(self):
        return hash(tuple(s.tobytes() for s in self.sigmas))

    def __repr__(self) -> str:
        return f"Permutation({[s.tolist() for s in self.sigmas]})"

    def to_json(self) -> list[list[int]]:
        return [s.tolist() for s in self.sigmas]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[int]]) -> "Permutation":
        return cls(tuple(np.asarray(s, dtype=np.int64) for s in data))


def identity(arch: Architecture) -> Permutation:
    return Permutation(tuple(np.arange(w) for w in arch.hidden))


def random_perm(arch: Architecture, seed) -> Permutation:
    rng = np.random.default_rng(seed)
    return Permutation(tuple(rng.permutation(w) for w in arch.hidden))


def _check(pi: Permutation, widths: Sequence[int]) -> None:
    if tuple(pi.widths) != tuple(widths):
        raise ValueError(f"permutation widths {pi.widths} do not match hidden widths {tuple(widths)}")


def compose(pi2: Permutation, pi1: Permutation) -> Permutation:
    """The permutation acting as ``pi1`` first, then ``pi2``."""
    _check(pi2, pi1.widths)
    return Permutation(tuple(s2[s1] for s2, s1 in zip(pi2.sigmas, pi1.sigmas)))


def invert(pi: Permutation) -> Permutation:
    return Permutation(pi.inverse_sigmas())


def apply_to_params(pi: Permutation, theta: Params) -> Params:
    _check(pi, theta.arch.hidden)
    inv = pi.inverse_sigmas()
    L = len(theta.weights)
    ws, bs = [], []
    for i, (w, b) in enumerate(theta.layers()):
        if i < L - 1:
            w = w[inv[i]]
            b = b[inv[i]]
        else:
            b = b.copy()
        if i > 0:
            w = w[:, inv[i - 1]]
        ws.append(w)
        bs.append(b)
    return Params(tuple(ws), tuple(bs))


def apply_to_delta(pi: Permutation, delta: Params) -> Params:
    """Same action on a parameter difference; linear in ``delta``."""
    return apply_to_params(pi, delta)


def hamming(pi: Permutation, other: Permutation) -> int:
    _check(pi, other.widths)
    return int(sum(np.count_nonzero(a != b) for a, b in zip(pi.sigmas, other.sigmas)))


def dumps(perms: Sequence[Permutation]) -> str:
    return json.dumps([p.to_json() for p in perms])


def loads(text: str) -> list[Permutation]:
    return [Permutation.from_json(p) for p in json.loads(text)]
