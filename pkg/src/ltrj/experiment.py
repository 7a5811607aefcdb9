"""End-to-end transfer experiment on one (source, target) initialisation pair.

Trains both initialisations, transfers the source trajectory onto the target
initialisation with every method, and collects the comparisons used for
evaluation: final accuracies, linear-path barriers, subsequent training and
the drift diagnostic.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .align import AlignOptions
from .data import Dataset
from .landscape import DriftReport, PathScan, barrier, drift_diagnostic, linear_path_scan
from .nn import Architecture, init_params, l2_dist
from .optim import SGDConfig, Trajectory, evaluate, train
from .permsym import apply_to_params
from .transfer import TransferResult, fgmt, gmt, linear_trajectory, naive_transfer, oracle_transfer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairSettings:
    hidden: tuple[int, ...] = (512,)
    sgd: SGDConfig = SGDConfig(lr=0.01, momentum=0.9, weight_decay=0.0, epochs=10, batch_size=128)
    T: int = 10
    match_batch_size: int = 128
    scan_points: int = 25
    resume_epochs: int = 2
    resume_lr: float = 0.001
    opts: AlignOptions = AlignOptions()


@dataclass
class PairResult:
    seed: int
    source: Trajectory
    target: Trajectory
    transfers: dict[str, TransferResult]
    final_acc: dict[str, float]
    source_barrier: dict[str, float] = field(default_factory=dict)
    source_endpoint_loss: dict[str, float] = field(default_factory=dict)
    target_barrier: dict[str, float] = field(default_factory=dict)
    target_distance: dict[str, float] = field(default_factory=dict)
    scans: dict[str, PathScan] = field(default_factory=dict)
    resume_acc: dict[str, list[float]] = field(default_factory=dict)
    drift: DriftReport | None = None
    seconds: float = 0.0


def run_pair(train_ds: Dataset, val_ds: Dataset, seed: int, settings: PairSettings = PairSettings()) -> PairResult:
    """Seed pair ``seed``: source init ``2*seed``, target init ``2*seed + 1``."""
    start = time.time()
    arch = Architecture((train_ds.dim, *settings.hidden, train_ds.num_classes))
    s1, s2 = 2 * seed, 2 * seed + 1
    theta1_0 = init_params(arch, s1)
    theta2_0 = init_params(arch, s2)
    source_run = train(theta1_0, train_ds, val_ds, replace(settings.sgd, seed=s1))
    target_run = train(theta2_0, train_ds, val_ds, replace(settings.sgd, seed=s2))
    theta1_T, theta2_T = source_run[source_run.T], target_run[target_run.T]

    cos = linear_trajectory(theta1_0, theta1_T, settings.T, "cosine")
    uni = linear_trajectory(theta1_0, theta1_T, settings.T, "uniform")
    kw = dict(batch_size=settings.match_batch_size, seed=seed, opts=settings.opts, val=val_ds)
    transfers = {
        "naive": naive_transfer(cos, theta2_0, val_ds),
        "oracle": oracle_transfer(cos, theta2_0, theta2_T, settings.opts, val_ds),
        "gmt": gmt(cos, theta2_0, train_ds, **kw),
        "fgmt": fgmt(cos, theta2_0, train_ds, **kw),
        "gmt_uniform": gmt(uni, theta2_0, train_ds, **kw),
    }
    res = PairResult(seed, source_run, target_run, transfers,
                     {k: r.metrics[-1][1] for k, r in transfers.items()})

    for name in ("naive", "gmt", "oracle"):
        r = transfers[name]
        permuted_source = apply_to_params(r.final_perm, theta1_T)
        scan = linear_path_scan(permuted_source, r.final, settings.scan_points, val_ds)
        res.source_barrier[name] = barrier(scan)
        res.source_endpoint_loss[name] = float((scan.losses[0] + scan.losses[-1]) / 2)
        target_scan = linear_path_scan(theta2_T, r.final, settings.scan_points, val_ds)
        res.target_barrier[name] = barrier(target_scan)
        res.target_distance[name] = l2_dist(theta2_T, r.final)
        res.scans[f"source/{name}"] = scan
        res.scans[f"target/{name}"] = target_scan

    resume_cfg = replace(settings.sgd, lr=settings.resume_lr, epochs=settings.resume_epochs, seed=s2)
    for name in ("naive", "gmt"):
        start_point = transfers[name].final.astype(np.float32)
        run = train(start_point, train_ds, val_ds, resume_cfg)
        res.resume_acc[name] = [evaluate(start_point, val_ds)[1]] + [m["val_acc"] for m in run.metrics]

    res.drift = drift_diagnostic(cos, theta2_0, transfers["gmt"].perms, train_ds, settings.match_batch_size, seed)
    res.seconds = time.time() - start
    log.info("pair %d: %s (%.1fs)", seed, res.final_acc, res.seconds)
    return res

