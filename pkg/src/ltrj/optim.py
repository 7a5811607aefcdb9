"""SGD with momentum, learning-rate schedules and trajectory recording."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .data import BatchSampler, Dataset
from .nn import NumericError, Params

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class SGDConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 128
    schedule: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


@dataclass
class Trajectory:
    checkpoints: list[Params]
    config: dict = field(default_factory=dict)
    seed: int | None = None
    metrics: list[dict] = field(default_factory=list)
    step_unit: str = "epoch"

    def __post_init__(self):
        if len(self.checkpoints) < 2:
            raise ValueError("a trajectory needs at least two checkpoints")
        for p in self.checkpoints[1:]:
            nn.check_same_shape(self.checkpoints[0], p)

    @property
    def T(self) -> int:
        return len(self.checkpoints) - 1

    def __len__(self) -> int:
        return len(self.checkpoints)

    def __getitem__(self, t: int) -> Params:
        return self.checkpoints[t]


class TrainingError(RuntimeError):
    def __init__(self, message: str, last_good: Params, epoch: int):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch


def cosine_lr(step: int, total: int, base_lr: float) -> float:
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside [0, {total})")
    return base_lr * (1 + math.cos(math.pi * step / total)) / 2


def sgd_step(params: Params, grad: Params, velocity: Params, lr: float, cfg: SGDConfig) -> tuple[Params, Params]:
    """Heavy-ball update: v' = mu v + (g + wd theta); theta' = theta - lr v'."""
    nn.check_same_shape(params, grad)
    nn.check_same_shape(params, velocity)
    new_p, new_v = [], []
    for p, g, v in zip(params.arrays(), grad.arrays(), velocity.arrays()):
        t = p.dtype.type
        d = g + t(cfg.weight_decay) * p if cfg.weight_decay else g
        v2 = t(cfg.momentum) * v + d if cfg.momentum else d.copy()
        new_v.append(v2)
        new_p.append(p - t(lr) * v2)
    if not all(np.isfinite(a).all() for a in new_p):
        raise NumericError("non-finite parameter after SGD step", 0)
    return Params(tuple(new_p[0::2]), tuple(new_p[1::2])), Params(tuple(new_v[0::2]), tuple(new_v[1::2]))


def evaluate(params: Params, ds: Dataset, batch_size: int = 1000) -> tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy over the whole dataset."""
    total, correct = 0.0, 0
    for k in range(0, len(ds), batch_size):
        x, y = ds.inputs[k:k + batch_size], ds.labels[k:k + batch_size]
        logits = nn.forward(params, x)
        total += nn.cross_entropy(logits, y) * len(y)
        correct += int(np.count_nonzero(logits.argmax(axis=1) == y))
    return total / len(ds), correct / len(ds)


def train(params0: Params, train_ds: Dataset, val_ds: Dataset | None, cfg: SGDConfig,
          dtype=np.float32) -> Trajectory:
    """Run ``cfg.epochs`` epochs of SGD, checkpointing after every epoch."""
    arch = params0.arch
    if train_ds.dim != arch.dims[0] or train_ds.num_classes != arch.dims[-1]:
        raise ValueError(f"dataset (d={train_ds.dim}, k={train_ds.num_classes}) does not fit dims {arch.dims}")
    params = params0.astype(dtype)
    velocity = Params.zeros(arch, dtype)
    sampler = BatchSampler(len(train_ds), cfg.batch_size, cfg.seed)
    total = cfg.epochs * sampler.batches_per_epoch
    x_all = train_ds.inputs.astype(dtype, copy=False)

    checkpoints = [params]
    metrics = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        try:
            for idx in sampler.epoch():
                lr = cosine_lr(step, total, cfg.lr) if cfg.schedule == "cosine" else cfg.lr
                value, grad = nn.loss_and_grad(params, x_all[idx], train_ds.labels[idx])
                params, velocity = sgd_step(params, grad, velocity, lr, cfg)
                losses.append(value)
                step += 1
        except NumericError as exc:
            raise TrainingError(f"training diverged in epoch {epoch}: {exc}", checkpoints[-1], epoch) from exc
        train_loss = float(np.mean(losses))
        if not math.isfinite(train_loss):
            raise TrainingError(f"non-finite train loss in epoch {epoch}", checkpoints[-1], epoch)
        row = {"epoch": epoch, "train_loss": train_loss}
        if val_ds is not None:
            row["val_loss"], row["val_acc"] = evaluate(params, val_ds)
        log.info("epoch %d %s", epoch, row)
        metrics.append(row)
        checkpoints.append(params)
    return Trajectory(checkpoints, config=asdict(cfg), seed=cfg.seed, metrics=metrics)


def resume_train(params_start: Params, train_ds: Dataset, val_ds: Dataset | None, cfg: SGDConfig) -> Trajectory:
    """``train`` from an arbitrary starting point, e.g. a transferred parameter."""
    return train(params_start, train_ds, val_ds, cfg)
