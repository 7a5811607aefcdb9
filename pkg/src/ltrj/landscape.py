"""Loss-landscape probes: linear paths, barriers, 2D planes and trajectory drift."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn
from .data import BatchSampler, Dataset
from .nn import Params, dot, l2_dist
from .optim import Trajectory, evaluate
from .permsym import Permutation, apply_to_delta

Evaluator = Callable[[Params], tuple[float, float]]


class DegenerateBasisError(ValueError):
    pass


def _evaluator(dataset: Dataset | None, evaluator: Evaluator | None, batch_size: int = 1000) -> Evaluator:
    if evaluator is not None:
        return evaluator
    if dataset is None:
        raise ValueError("need a dataset or an evaluator")
    return lambda p: evaluate(p, dataset, batch_size)


@dataclass
class PathScan:
    lambdas: np.ndarray
    losses: np.ndarray
    accuracies: np.ndarray
    meta: dict = field(default_factory=dict)


def linear_path_scan(theta_a: Params, theta_b: Params, n_points: int = 25, dataset: Dataset | None = None,
                     evaluator: Evaluator | None = None) -> PathScan:
    """Evaluate (1 - lam) theta_a + lam theta_b on a uniform lam grid including both ends."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    nn.check_same_shape(theta_a, theta_b)
    ev = _evaluator(dataset, evaluator)
    lambdas = np.linspace(0.0, 1.0, n_points)
    a = theta_a.astype(np.float64)
    b = theta_b.astype(np.float64)
    # interior points are evaluated at the endpoints' precision
    dtype = np.result_type(theta_a.dtype, theta_b.dtype)
    losses, accs = [], []
    for i, lam in enumerate(lambdas):
        if i == 0:
            p = theta_a
        elif i == n_points - 1:
            p = theta_b
        else:
            p = (a * (1 - lam) + b * lam).astype(dtype)
        loss, acc = ev(p)
        losses.append(loss)
        accs.append(acc)
    return PathScan(lambdas, np.array(losses), np.array(accs))


def barrier(scan: PathScan) -> float:
    """Largest excess of the loss over the straight line between the end losses, floored at 0."""
    lam, loss = scan.lambdas, scan.losses
    excess = loss - ((1 - lam) * loss[0] + lam * loss[-1])
    return max(0.0, float(np.max(excess)))


@dataclass
class PlaneScan:
    origin: Params
    u: Params
    v: Params
    anchors: np.ndarray      # (3, 2) plane coordinates of theta1, theta2, theta3
    xs: np.ndarray
    ys: np.ndarray
    losses: np.ndarray       # (len(ys), len(xs))
    accuracies: np.ndarray

    def point(self, x: float, y: float) -> Params:
        return self.origin + self.u * x + self.v * y

    def rows(self):
        for j, y in enumerate(self.ys):
            for i, x in enumerate(self.xs):
                yield float(x), float(y), float(self.losses[j, i]), float(self.accuracies[j, i])


def plane_basis(theta1: Params, theta2: Params, theta3: Params):
    """Orthonormal (u, v) spanning the plane through three parameters, plus anchor coordinates."""
    nn.check_same_shape(theta1, theta2)
    nn.check_same_shape(theta1, theta3)
    o = theta1.astype(np.float64)
    d = theta2.astype(np.float64) - o
    w = theta3.astype(np.float64) - o
    du = math.sqrt(dot(d, d))
    if du == 0:
        raise DegenerateBasisError("theta1 and theta2 coincide")
    u = d * (1 / du)
    wu = dot(w, u)
    perp = w - u * wu
    dv = math.sqrt(dot(perp, perp))
    if dv <= 1e-12 * max(1.0, math.sqrt(dot(w, w))):
        raise DegenerateBasisError("the three anchors are collinear")
    v = perp * (1 / dv)
    anchors = np.array([[0.0, 0.0], [du, 0.0], [wu, dv]])
    return o, u, v, anchors


def plane_scan(theta1: Params, theta2: Params, theta3: Params, grid_n: int = 21, margin: float = 0.2,
               dataset: Dataset | None = None, evaluator: Evaluator | None = None) -> PlaneScan:
    """Grid of losses over the plane of three parameters (Garipov et al. layout)."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    ev = _evaluator(dataset, evaluator)
    o, u, v, anchors = plane_basis(theta1, theta2, theta3)
    lo, hi = anchors.min(axis=0), anchors.max(axis=0)
    pad = (hi - lo) * margin
    xs = np.linspace(lo[0] - pad[0], hi[0] + pad[0], grid_n)
    ys = np.linspace(lo[1] - pad[1], hi[1] + pad[1], grid_n)
    losses = np.empty((grid_n, grid_n))
    accs = np.empty((grid_n, grid_n))
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            losses[j, i], accs[j, i] = ev(o + u * x + v * y)
    return PlaneScan(o, u, v, anchors, xs, ys, losses, accs)


@dataclass
class DriftReport:
    rows: list[tuple[int, int, int, float]]   # (s, s', t, ||theta2_{pi_s'}^t - theta2_{pi_s}^t||)
    K_hat: float
    eps_hat: float
    match_residual: float = float("nan")

    def distance(self, s: int, s2: int, t: int) -> float:
        if s == s2:
            return 0.0
        a, b = min(s, s2), max(s, s2)
        for r in self.rows:
            if r[0] == a and r[1] == b and r[2] == t:
                return r[3]
        raise KeyError((s, s2, t))

    @property
    def max_distance(self) -> float:
        return max((r[3] for r in self.rows), default=0.0)


def drift_diagnostic(source: Trajectory, theta2_0: Params, perms: Sequence[Permutation],
                     data: Dataset | None = None, batch_size: int = 128, seed: int = 0) -> DriftReport:
    """Empirical look at how much transferred points move as the permutation is refined.

    With ``data`` it also estimates a gradient Lipschitz constant from
    consecutive source checkpoints and the residual of each source step against
    a best-fitting gradient step.
    """
    T = source.T
    if len(perms) != T:
        raise ValueError(f"need {T} permutations, got {len(perms)}")
    base = source[0].astype(np.float64)
    deltas = [source[t].astype(np.float64) - base for t in range(T + 1)]
    moved = {s: [apply_to_delta(perms[s - 1], deltas[t]) for t in range(s + 1)] for s in range(1, T + 1)}
    rows = []
    for s, s2 in itertools.combinations(range(1, T + 1), 2):
        for t in range(s + 1):
            # theta2^0 cancels in the difference
            rows.append((s, s2, t, l2_dist(moved[s2][t], moved[s][t])))

    K_hat = eps_hat = match_res = float("nan")
    if data is not None:
        sampler = iter(BatchSampler(len(data), batch_size, seed))
        grads, ks, eps = [], [], []
        for t in range(T):
            idx = next(sampler)
            x, y = data.inputs[idx], data.labels[idx]
            _, ga = nn.loss_and_grad(source[t], x, y)
            _, gb = nn.loss_and_grad(source[t + 1], x, y)
            grads.append((ga, x, y))
            dist = l2_dist(source[t + 1], source[t])
            if dist > 0:
                ks.append(l2_dist(ga, gb) / dist)
            step = source[t + 1].astype(np.float64) - source[t].astype(np.float64)
            g64 = ga.astype(np.float64)
            gg = dot(g64, g64)
            alpha = max(0.0, -dot(step, g64) / gg) if gg > 0 else 0.0
            eps.append(math.sqrt(max(0.0, dot(step, step) + 2 * alpha * dot(step, g64) + alpha * alpha * gg)))
        K_hat = max(ks) if ks else 0.0
        eps_hat = max(eps)
        res = []
        for s in range(1, T + 1):
            for t in range(s):
                ga, x, y = grads[t]
                prev = perms[s - 2] if s >= 2 else None
                theta = theta2_0.astype(np.float64) + (apply_to_delta(prev, deltas[t]) if prev is not None else deltas[t])
                _, g2 = nn.loss_and_grad(theta.astype(np.float32), x, y)
                res.append(l2_dist(apply_to_delta(perms[s - 1], ga), g2))
        match_res = max(res)
    return DriftReport(rows, K_hat, eps_hat, match_res)


__all__ = [
    "PathScan", "PlaneScan", "DriftReport", "DegenerateBasisError", "evaluate", "linear_path_scan",
    "barrier", "plane_basis", "plane_scan", "drift_diagnostic",
]
