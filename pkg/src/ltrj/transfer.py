"""Learning-trajectory transfer via permutation symmetry.

A source trajectory ``theta1^0..theta1^T`` is moved onto a new initial point
``theta2^0`` as ``theta2^t = theta2^0 + pi_t(theta1^t - theta1^0)``.  The
permutation is the identity (naive), a weight match of the trained deltas
(oracle), or found by matching mini-batch gradients along the trajectory
(GMT, and its gradient-caching variant FGMT).

Transferred parameters are kept in float64.  Differences of float32
checkpoints are exact there, so the step identities between consecutive
transferred points hold bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn
from .align import AlignOptions, gradient_matching, weight_matching
from .data import BatchSampler, Dataset
from .nn import Params
from .optim import Trajectory, evaluate
from .permsym import Permutation, apply_to_delta, identity

LINEAR_SCHEDULES = ("uniform", "cosine")


def schedule_lambdas(T: int, schedule: str = "cosine") -> np.ndarray:
    """Interpolation weights lambda_0 = 0 <= ... <= lambda_T = 1."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if schedule == "uniform":
        lam = np.arange(T + 1) / T
    elif schedule == "cosine":
        # step t -> t+1 has size alpha_t / Z with alpha_t = 1 + cos(pi t / T)
        alpha = np.array([1 + math.cos(math.pi * t / T) for t in range(T + 1)])
        lam = np.concatenate([[0.0], np.cumsum(alpha[:-1])]) / alpha.sum()
    else:
        raise ValueError(f"schedule must be one of {LINEAR_SCHEDULES}")
    lam[0], lam[-1] = 0.0, 1.0
    return lam


@dataclass(frozen=True)
class LinearTrajectorySpec:
    theta0: Params
    thetaT: Params
    T: int
    schedule: str = "cosine"


def make_linear_trajectory(spec: LinearTrajectorySpec) -> Trajectory:
    nn.check_same_shape(spec.theta0, spec.thetaT)
    lam = schedule_lambdas(spec.T, spec.schedule)
    dtype = np.result_type(spec.theta0.dtype, spec.thetaT.dtype)
    a = spec.theta0.astype(np.float64)
    b = spec.thetaT.astype(np.float64)
    pts = [spec.theta0.astype(dtype)]
    for t in range(1, spec.T + 1):
        pts.append((a * (1 - lam[t]) + b * lam[t]).astype(dtype))
    return Trajectory(pts, config={"linear": spec.schedule, "lambdas": lam.tolist()})


def linear_trajectory(theta0: Params, thetaT: Params, T: int, schedule: str = "cosine") -> Trajectory:
    return make_linear_trajectory(LinearTrajectorySpec(theta0, thetaT, T, schedule))


@dataclass
class TransferResult:
    """``transferred[t]`` is theta2 at step t built with ``perms[t-1]`` (t >= 1)."""

    transferred: list[Params]
    perms: list[Permutation]
    method: str
    metrics: list[tuple[float, float]] = field(default_factory=list)
    grad_evals: int = 0

    @property
    def final(self) -> Params:
        return self.transferred[-1]

    @property
    def final_perm(self) -> Permutation:
        return self.perms[-1]

    def best_step(self) -> int | None:
        """Step with the highest validation accuracy (reported, never applied)."""
        if not self.metrics:
            return None
        return int(np.argmax([acc for _, acc in self.metrics]))


def _f64(p: Params) -> Params:
    return p.astype(np.float64)


def transfer_step(theta2_prev: Params, pi: Permutation, delta1: Params) -> Params:
    """``theta2_prev + pi(delta1)``, computed in float64."""
    nn.check_same_shape(theta2_prev, delta1)
    return _f64(theta2_prev) + apply_to_delta(pi, _f64(delta1))


class _Source:
    def __init__(self, source: Trajectory, theta2_0: Params):
        if len(source) < 2:
            raise ValueError("source trajectory needs at least two checkpoints")
        nn.check_same_shape(source[0], theta2_0)
        self.traj = source
        self.base = _f64(source[0])
        self.theta2_0 = _f64(theta2_0)

    @property
    def T(self) -> int:
        return self.traj.T

    def delta(self, t: int) -> Params:
        return _f64(self.traj[t]) - self.base

    def point(self, pi: Permutation, t: int) -> Params:
        """theta2^0 + pi(theta1^t - theta1^0)."""
        if t == 0:
            return self.theta2_0
        return transfer_step(self.theta2_0, pi, self.delta(t))


def _metrics(points: Sequence[Params], val: Dataset | None) -> list[tuple[float, float]]:
    if val is None:
        return []
    return [evaluate(p, val) for p in points]


def _fixed(src: _Source, pi: Permutation, method: str, val: Dataset | None) -> TransferResult:
    pts = [src.point(pi, t) for t in range(src.T + 1)]
    return TransferResult(pts, [pi] * src.T, method, _metrics(pts, val))


def naive_transfer(source: Trajectory, theta2_0: Params, val: Dataset | None = None) -> TransferResult:
    src = _Source(source, theta2_0)
    return _fixed(src, identity(theta2_0.arch), "naive", val)


def oracle_transfer(source: Trajectory, theta2_0: Params, theta2_T_true: Params,
                    opts: AlignOptions | None = None, val: Dataset | None = None) -> TransferResult:
    """Fixed permutation from weight-matching the source delta onto the trained target delta."""
    src = _Source(source, theta2_0)
    nn.check_same_shape(theta2_0, theta2_T_true)
    pi, _ = weight_matching(src.delta(src.T), _f64(theta2_T_true) - src.theta2_0, opts)
    return _fixed(src, pi, "oracle", val)


class _GradFn:
    """Counts forward/backward passes; gradients are taken at ``dtype`` precision."""

    def __init__(self, data: Dataset, dtype):
        self.data = data
        self.dtype = dtype
        self.calls = 0

    def __call__(self, params: Params, idx: np.ndarray) -> Params:
        self.calls += 1
        _, g = nn.loss_and_grad(params.astype(self.dtype), self.data.inputs[idx], self.data.labels[idx])
        return g


def _check_data(data: Dataset, theta2_0: Params) -> None:
    if len(data) == 0:
        raise ValueError("empty dataset")
    arch = theta2_0.arch
    if data.dim != arch.dims[0] or data.num_classes != arch.dims[-1]:
        raise ValueError(f"dataset (d={data.dim}, k={data.num_classes}) does not fit dims {arch.dims}")


def gmt(source: Trajectory, theta2_0: Params, data: Dataset, batch_size: int = 128, seed: int = 0,
        opts: AlignOptions | None = None, val: Dataset | None = None, grad_dtype=np.float32,
        callback: Callable[[int, Permutation], None] | None = None) -> TransferResult:
    """Gradient matching along the trajectory; recomputes all gradients each step (O(T^2))."""
    return _run(source, theta2_0, data, batch_size, seed, opts, val, grad_dtype, callback, cache=False)


def fgmt(source: Trajectory, theta2_0: Params, data: Dataset, batch_size: int = 128, seed: int = 0,
         opts: AlignOptions | None = None, val: Dataset | None = None, grad_dtype=np.float32,
         callback: Callable[[int, Permutation], None] | None = None) -> TransferResult:
    """GMT with gradient caching: one new gradient pair per step (O(T))."""
    return _run(source, theta2_0, data, batch_size, seed, opts, val, grad_dtype, callback, cache=True)


def _run(source, theta2_0, data, batch_size, seed, opts, val, grad_dtype, callback, cache: bool):
    src = _Source(source, theta2_0)
    _check_data(data, theta2_0)
    grad = _GradFn(data, grad_dtype)
    batches = iter(BatchSampler(len(data), batch_size, seed))
    pi = identity(theta2_0.arch)
    g1: list[Params] = []
    g2: list[Params] = []
    perms: list[Permutation] = []
    points = [src.theta2_0]
    for s in range(1, src.T + 1):
        if cache:
            steps = [s]
        else:
            g1, g2 = [], []
            steps = list(range(1, s + 1))
        for t in steps:
            # one batch feeds both networks
            idx = next(batches)
            g1.append(grad(source[t - 1], idx))
            g2.append(grad(src.point(pi, t - 1), idx))
        pi = gradient_matching(g1, g2, opts)
        perms.append(pi)
        points.append(src.point(pi, s))
        if callback is not None:
            callback(s, pi)
    method = "fgmt" if cache else "gmt"
    return TransferResult(points, perms, method, _metrics(points, val), grad_evals=grad.calls)


def trajectory_for(result: TransferResult, source: Trajectory, theta2_0: Params, s: int) -> list[Params]:
    """theta2^t for t = 0..s, all built with the step-s permutation."""
    src = _Source(source, theta2_0)
    pi = identity(theta2_0.arch) if s == 0 else result.perms[s - 1]
    return [src.point(pi, t) for t in range(s + 1)]


def check_consistency(result: TransferResult, source: Trajectory, theta2_0: Params) -> bool:
    """Bitwise check of theta2^t - theta2^{t-1} = pi_t(theta1^t - theta1^{t-1}) for every step."""
    src = _Source(source, theta2_0)
    if len(result.transferred) != src.T + 1 or len(result.perms) != src.T:
        return False
    if not result.transferred[0].bit_equal(src.theta2_0):
        return False
    for t in range(1, src.T + 1):
        pi = result.perms[t - 1]
        prev = src.point(pi, t - 1)
        lhs = result.transferred[t] - prev
        rhs = apply_to_delta(pi, _f64(source[t]) - _f64(source[t - 1]))
        if not lhs.bit_equal(rhs):
            return False
        if not result.transferred[t].bit_equal(src.point(pi, t)):
            return False
    return True


TRANSFER_METHODS = ("naive", "oracle", "gmt", "fgmt")
