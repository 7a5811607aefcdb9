"""Linear assignment and coordinate-descent weight / gradient matching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .nn import Params, check_same_shape
from .permsym import Permutation, apply_to_params, identity


@dataclass(frozen=True)
class AlignOptions:
    max_sweeps: int = 100
    layer_order_seed: int = 0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


def _column_potentials(C: np.ndarray, sigma: np.ndarray) -> np.ndarray | None:
    """Dual column potentials certifying the optimality of ``sigma`` (longest paths)."""
    n = len(sigma)
    # a[j, k]: gain of moving row sigma[j] from column j to column k
    a = C[sigma, :] - C[sigma, np.arange(n)][:, None]
    v = np.zeros(n)
    for _ in range(n + 1):
        nxt = np.maximum(v, (v[:, None] + a).max(axis=0))
        if np.array_equal(nxt, v):
            return v
        v = nxt
    return None  # rounding produced a positive cycle; leave sigma alone


def _augment(E: np.ndarray, row_of: np.ndarray, col_of: np.ndarray, free_row: int, target_col: int,
             blocked: np.ndarray) -> list[int] | None:
    """Columns of an alternating path from ``free_row`` to ``target_col`` in the equality graph."""
    parent = {}
    frontier = [free_row]
    seen = blocked.copy()
    while frontier:
        nxt = []
        for r in frontier:
            for c in np.flatnonzero(E[r] & ~seen):
                seen[c] = True
                parent[c] = r
                if c == target_col:
                    path = [c]
                    while parent[path[-1]] != free_row:
                        path.append(col_of[parent[path[-1]]])
                    return path[::-1]
                nxt.append(row_of[c])
        frontier = nxt
    return None


def _lexmin_ties(C: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    # Every optimal assignment is a perfect matching on the zero reduced-cost
    # edges; walk columns in order and take the smallest row that still admits one.
    n = len(sigma)
    v = _column_potentials(C, sigma)
    if v is None:
        return sigma
    u = np.empty(n)
    u[sigma] = C[sigma, np.arange(n)] - v
    tol = 64 * np.finfo(float).eps * max(1.0, float(np.abs(C).max())) * n
    E = (u[:, None] + v[None, :] - C) <= tol
    E[sigma, np.arange(n)] = True
    row_of = sigma.copy()
    col_of = np.argsort(sigma)
    fixed = np.zeros(n, dtype=bool)
    for j in range(n):
        fixed[j] = True
        for r in np.flatnonzero(E[:, j]):
            if r >= row_of[j]:
                break
            c = col_of[r]
            if fixed[c]:
                continue
            path = _augment(E, row_of, col_of, row_of[j], c, fixed)
            if path is None:
                continue
            moving = row_of[j]
            row_of[j], col_of[r] = r, j
            for col in path:
                nxt = row_of[col]
                row_of[col], col_of[moving] = moving, col
                moving = nxt
            break
    cols = np.arange(n)
    if math.fsum(C[row_of, cols]) < math.fsum(C[sigma, cols]):
        return sigma
    return row_of


def solve_lap_max(C) -> np.ndarray:
    """Bijection ``sigma`` maximising ``sum_j C[sigma[j], j]``.

    Exact (shortest augmenting path, via scipy).  When several assignments are
    optimal the lexicographically smallest ``sigma`` is returned.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {C.shape}")
    if not np.isfinite(C).all():
        raise ValueError("cost matrix has non-finite entries")
    # rows of C.T are the columns j of C; col_ind[j] is the row assigned to j
    _, sigma = linear_sum_assignment(C.T, maximize=True)
    return _lexmin_ties(C, sigma.astype(np.int64))


def lap_value(C: np.ndarray, sigma: np.ndarray) -> float:
    return float(C[sigma, np.arange(len(sigma))].sum())


def _stack(mats: Sequence[np.ndarray], axis: int) -> np.ndarray:
    if len(mats) == 1:
        return mats[0].astype(np.float64, copy=False)
    return np.concatenate([m.astype(np.float64, copy=False) for m in mats], axis=axis)


class _Problem:
    """min over pi of sum_k w_k * ||pi src_k - tgt_k||^2 with layer-wise LAP updates."""

    def __init__(self, sources: Sequence[Params], targets: Sequence[Params], weights=None):
        if len(sources) == 0 or len(sources) != len(targets):
            raise ValueError("need equal-length, non-empty lists of parameters")
        for s, t in zip(sources, targets):
            check_same_shape(sources[0], s)
            check_same_shape(s, t)
        if weights is None:
            weights = np.ones(len(sources))
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(sources),) or (weights < 0).any():
            raise ValueError("weights must be non-negative, one per pair")
        self.arch = sources[0].arch
        self.sources = sources
        self.targets = targets
        self.weights = weights
        L = self.arch.num_layers
        sw = np.sqrt(weights)
        # Per layer, stack all pairs along the axis that is summed over in C_i.
        self.src_w = [_stack([s.weights[i] * w for s, w in zip(sources, sw)], 1) for i in range(L)]
        self.tgt_w = [_stack([t.weights[i] * w for t, w in zip(targets, sw)], 1) for i in range(L)]
        self.src_b = [_stack([s.biases[i][:, None] * w for s, w in zip(sources, sw)], 1) for i in range(L)]
        self.tgt_b = [_stack([t.biases[i][:, None] * w for t, w in zip(targets, sw)], 1) for i in range(L)]
        # Next-layer weights stacked along rows, since their input axis is permuted.
        self.src_next = [_stack([s.weights[i + 1] * w for s, w in zip(sources, sw)], 0) for i in range(L - 1)]
        self.tgt_next = [_stack([t.weights[i + 1] * w for t, w in zip(targets, sw)], 0) for i in range(L - 1)]

    def cost(self, i: int, inv: list[np.ndarray]) -> np.ndarray:
        """Cost matrix for hidden layer ``i`` (0-based) given the other sigmas."""
        L = self.arch.num_layers
        d_prev = self.arch.dims[i]
        w_in = self.src_w[i]
        if i > 0:
            # w_in columns are pair-blocks of width d_prev; permute within each block
            k = w_in.shape[1] // d_prev
            idx = (np.arange(k)[:, None] * d_prev + inv[i - 1][None, :]).ravel()
            w_in = w_in[:, idx]
        C = self.tgt_w[i] @ w_in.T
        C += self.tgt_b[i] @ self.src_b[i].T
        w_out = self.src_next[i]
        if i + 1 < L - 1:
            d_next = self.arch.dims[i + 2]
            k = w_out.shape[0] // d_next
            idx = (np.arange(k)[:, None] * d_next + inv[i + 1][None, :]).ravel()
            w_out = w_out[idx]
        C += self.tgt_next[i].T @ w_out
        return C

    def objective(self, pi: Permutation) -> float:
        total = 0.0
        for s, t, w in zip(self.sources, self.targets, self.weights):
            ps = apply_to_params(pi, s)
            for a, b in zip(ps.arrays(), t.arrays()):
                d = a.astype(np.float64) - b.astype(np.float64)
                total += w * float(np.dot(d.ravel(), d.ravel()))
        return total

    def solve(self, opts: AlignOptions, init: Permutation | None = None):
        pi = init if init is not None else identity(self.arch)
        sigmas = [s.copy() for s in pi.sigmas]
        inv = [np.argsort(s) for s in sigmas]
        history = [self.objective(pi)]
        n_hidden = len(sigmas)
        rng = np.random.default_rng(opts.layer_order_seed)
        for _ in range(opts.max_sweeps):
            changed = False
            for i in rng.permutation(n_hidden):
                C = self.cost(int(i), inv)
                new = solve_lap_max(C)
                old_val, new_val = lap_value(C, sigmas[i]), lap_value(C, new)
                if new_val > old_val + 1e-12 * max(1.0, abs(old_val)) and not np.array_equal(new, sigmas[i]):
                    sigmas[i] = new
                    inv[i] = np.argsort(new)
                    changed = True
                    history.append(self.objective(Permutation(tuple(sigmas))))
                else:
                    history.append(history[-1])
            if not changed:
                break
        return Permutation(tuple(sigmas)), history


def weight_matching(theta1: Params, theta2: Params, opts: AlignOptions | None = None):
    """Permutation ``pi`` minimising ``||pi theta1 - theta2||^2``; returns ``(pi, objective_history)``."""
    return _Problem([theta1], [theta2]).solve(opts or AlignOptions())


def gradient_matching(g1: Sequence[Params], g2: Sequence[Params], opts: AlignOptions | None = None,
                      weights=None) -> Permutation:
    """Permutation minimising ``sum_t ||pi g1[t] - g2[t]||^2``."""
    if len(g1) == 0:
        raise ValueError("gradient lists must be non-empty")
    pi, _ = _Problem(list(g1), list(g2), weights).solve(opts or AlignOptions())
    return pi


def gradient_matching_with_history(g1, g2, opts=None, weights=None):
    return _Problem(list(g1), list(g2), weights).solve(opts or AlignOptions())


def matching_objective(pi: Permutation, sources: Sequence[Params], targets: Sequence[Params]) -> float:
    return _Problem(list(sources), list(targets)).objective(pi)


def layerwise_objective(pi: Permutation, theta1: Params, theta2: Params) -> float:
    """``sum_i ||sigma_i W_i sigma_{i-1}^{-1} - Z_i||_F^2`` plus bias terms, via permutation matrices."""
    L = theta1.arch.num_layers
    mats = [np.eye(len(s))[:, s] for s in pi.sigmas]  # column j has its 1 at row sigma[j]
    total = 0.0
    for i in range(L):
        w = theta1.weights[i].astype(np.float64)
        b = theta1.biases[i].astype(np.float64)
        if i < L - 1:
            w = mats[i] @ w
            b = mats[i] @ b
        if i > 0:
            w = w @ mats[i - 1].T
        total += float(np.sum((w - theta2.weights[i]) ** 2) + np.sum((b - theta2.biases[i]) ** 2))
    return total
