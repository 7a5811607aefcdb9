"""Command-line entry point: ``ltrj <command> ...``.

Exit codes: 0 success, 2 usage / configuration / input files, 3 runtime or
numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from .align import AlignOptions, weight_matching
from .checkpoint import CheckpointError, read_checkpoint, step_name, write_checkpoint
from .config import ConfigError, ExperimentConfig
from .data import data_root, synth_blobs, write_mnist_subset
from .landscape import barrier, drift_diagnostic, linear_path_scan, plane_scan
from .nn import Architecture, NumericError, init_params
from .optim import Trajectory, TrainingError, evaluate, train
from .permsym import Permutation, dumps, hamming, loads
from .transfer import fgmt, gmt, linear_trajectory, naive_transfer, oracle_transfer

log = logging.getLogger("ltrj")


class UsageError(Exception):
    pass


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _manifest(path: Path, payload: dict) -> None:
    payload = dict(payload)
    # only this block may differ between otherwise identical runs
    payload["noncanonical"] = {"created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_trajectory(out: Path, traj: Trajectory, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for t, p in enumerate(traj.checkpoints):
        write_checkpoint(out / step_name(t), p)
    _manifest(out / "manifest.json", {"dims": list(traj[0].arch.dims), "T": traj.T, "seed": traj.seed,
                                      "sgd": traj.config, "metrics": traj.metrics, **(extra or {})})


def read_trajectory(path: str | Path) -> Trajectory:
    d = Path(path)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise UsageError(f"no manifest.json in {d}")
    manifest = json.loads(mpath.read_text())
    dims = manifest.get("dims")
    files = sorted(d.glob("step_*.ltrj"))
    if len(files) < 2:
        raise UsageError(f"trajectory {d} has fewer than two checkpoints")
    cps = [read_checkpoint(f, dims) for f in files]
    return Trajectory(cps, config=manifest.get("sgd", {}), seed=manifest.get("seed"),
                      metrics=manifest.get("metrics", []))


def _checkpoint(path, dims=None):
    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return read_checkpoint(path, dims)


def _load(args) -> ExperimentConfig:
    return config_mod.load(args.config, args.set)


def _datasets(cfg):
    train_ds, val_ds = config_mod.load_datasets(cfg)
    return train_ds, val_ds, config_mod.dims_for(cfg, train_ds)


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if args.kind == "mnist-subset":
        root = write_mnist_subset(out if args.out else data_root())
        print(f"wrote MNIST subset IDX files to {root}")
        return 0
    cfg = _load(args)
    d = cfg.dataset
    ds = synth_blobs(d.num_classes, d.per_class, d.dim, d.spread, d.seed)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(out / "blobs.npz", inputs=ds.inputs, labels=ds.labels)
    print(f"wrote {len(ds)} examples to {out / 'blobs.npz'}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    train_ds, val_ds, dims = _datasets(cfg)
    seed = cfg.init_seed if args.init_seed is None else args.init_seed
    if args.init:
        params0 = _checkpoint(args.init, dims)
    else:
        params0 = init_params(Architecture(dims), seed)
    traj = train(params0, train_ds, val_ds, cfg.sgd)
    out = Path(args.out or cfg.output_dir)
    write_trajectory(out, traj, {"config": cfg.to_dict(), "init_seed": seed})
    print(json.dumps(traj.metrics[-1]))
    return 0


def cmd_resume(args) -> int:
    args.init_seed = None
    if not args.init:
        raise UsageError("resume needs --init (starting checkpoint)")
    return cmd_train(args)


def cmd_init(args) -> int:
    cfg = _load(args)
    train_ds, _, dims = _datasets(cfg)
    seed = cfg.init_seed if args.seed is None else args.seed
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(out, init_params(Architecture(dims), seed))
    return 0


def _source_trajectory(cfg, args) -> Trajectory:
    traj = read_trajectory(args.source)
    if cfg.transfer.trajectory == "linear":
        return linear_trajectory(traj[0], traj[traj.T], cfg.transfer.T, cfg.transfer.schedule)
    return traj


def cmd_transfer(args) -> int:
    cfg = _load(args)
    tc = cfg.transfer
    method = args.method or tc.method
    if method == "oracle" and not args.trained_target:
        raise UsageError("method=oracle requires --trained-target")
    train_ds, val_ds, dims = _datasets(cfg)
    source = _source_trajectory(cfg, args)
    if source[0].arch.dims != tuple(dims):
        raise UsageError(f"source dims {source[0].arch.dims} do not match config dims {tuple(dims)}")
    theta2_0 = _checkpoint(args.target_init, dims)
    opts = AlignOptions(tc.max_sweeps, tc.layer_order_seed)
    if method == "naive":
        result = naive_transfer(source, theta2_0, val_ds)
    elif method == "oracle":
        result = oracle_transfer(source, theta2_0, _checkpoint(args.trained_target, dims), opts, val_ds)
    else:
        fn = gmt if method == "gmt" else fgmt
        result = fn(source, theta2_0, train_ds, tc.batch_size, tc.seed, opts, val_ds)

    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, p in enumerate(result.transferred):
        write_checkpoint(out / step_name(t), p)
    (out / "perms.json").write_text(dumps(result.perms) + "\n")
    header = ["step", "val_loss", "val_acc"]
    truth = None
    if args.planted:
        truth = Permutation.from_json(json.loads(Path(args.planted).read_text()))
        header.append("hamming")
    rows = []
    for t, (loss, acc) in enumerate(result.metrics):
        row = [t, loss, acc]
        if truth is not None:
            row.append(0 if t == 0 else hamming(result.perms[t - 1], truth))
        rows.append(row)
    _write_csv(out / "metrics.csv", header, rows)
    _manifest(out / "manifest.json", {"dims": list(dims), "T": source.T, "method": method,
                                      "grad_evals": result.grad_evals, "best_step": result.best_step(),
                                      "config": cfg.to_dict(), "source": str(args.source)})
    loss, acc = result.metrics[-1]
    print(json.dumps({"method": method, "final_val_loss": loss, "final_val_acc": acc,
                      "best_step": result.best_step()}))
    return 0


def cmd_align(args) -> int:
    a = _checkpoint(args.a)
    b = _checkpoint(args.b, a.arch.dims)
    pi, history = weight_matching(a, b, AlignOptions(args.max_sweeps, args.seed))
    Path(args.out).write_text(json.dumps(pi.to_json()) + "\n")
    print(json.dumps({"objective_initial": history[0], "objective_final": history[-1]}))
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    train_ds, val_ds, dims = _datasets(cfg)
    ds = {"train": train_ds, "val": val_ds}[args.split]
    loss, acc = evaluate(_checkpoint(args.checkpoint, dims), ds)
    print(json.dumps({"loss": loss, "acc": acc}))
    return 0


def cmd_scan(args) -> int:
    if args.kind == "drift":
        return cmd_drift(args)
    cfg = _load(args)
    train_ds, val_ds, dims = _datasets(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "path":
        if not (args.a and args.b):
            raise UsageError("scan path needs --a and --b")
        scan = linear_path_scan(_checkpoint(args.a, dims), _checkpoint(args.b, dims), args.points, val_ds)
        _write_csv(out / "scan1d.csv", ["lambda", "loss", "acc"],
                   zip(scan.lambdas, scan.losses, scan.accuracies))
        print(json.dumps({"barrier": barrier(scan)}))
    else:
        if not (args.a and args.b and args.c):
            raise UsageError("scan plane needs --a, --b and --c")
        ps = plane_scan(_checkpoint(args.a, dims), _checkpoint(args.b, dims), _checkpoint(args.c, dims),
                        args.grid, args.margin, val_ds)
        _write_csv(out / "scan2d.csv", ["x", "y", "loss", "acc"], ps.rows())
        (out / "anchors.json").write_text(json.dumps(ps.anchors.tolist()) + "\n")
    return 0


def cmd_drift(args) -> int:
    cfg = _load(args)
    if not (args.source and args.target_init and args.perms):
        raise UsageError("drift needs --source, --target-init and --perms")
    train_ds, _, dims = _datasets(cfg)
    source = _source_trajectory(cfg, args)
    perms_path = Path(args.perms)
    if not perms_path.is_file():
        raise UsageError(f"permutations not found: {perms_path}")
    perms = loads(perms_path.read_text())
    report = drift_diagnostic(source, _checkpoint(args.target_init, dims), perms, train_ds,
                              cfg.transfer.batch_size, cfg.transfer.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "drift.csv", ["s", "sprime", "t", "distance"], report.rows)
    summary = {"K_hat": report.K_hat, "eps_hat": report.eps_hat, "match_residual": report.match_residual,
               "max_distance": report.max_distance}
    (out / "drift_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltrj", description="Train MLPs and transfer learning trajectories.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. sgd.lr=0.05 (repeatable)")
        return sp

    sp = common(sub.add_parser("gen-data", help="write a dataset to disk"))
    sp.add_argument("kind", choices=["blobs", "mnist-subset"])
    sp.add_argument("--out", default="")
    sp.set_defaults(func=cmd_gen_data)

    sp = common(sub.add_parser("init", help="write a Kaiming-initialised checkpoint"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_init)

    for name, func in (("train", cmd_train), ("resume", cmd_resume)):
        sp = common(sub.add_parser(name, help=f"{name} with SGD and record per-epoch checkpoints"))
        sp.add_argument("--init", help="starting checkpoint (required for resume)")
        sp.add_argument("--init-seed", type=int)
        sp.add_argument("--out")
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("transfer", help="transfer a source trajectory onto a new initialisation"))
    sp.add_argument("--source", required=True, help="trajectory directory")
    sp.add_argument("--target-init", required=True)
    sp.add_argument("--method", choices=["naive", "oracle", "gmt", "fgmt"])
    sp.add_argument("--trained-target", help="actually trained target (oracle only)")
    sp.add_argument("--planted", help="JSON permutation to report hamming distance against")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_transfer)

    sp = sub.add_parser("align", help="weight-match checkpoint A onto checkpoint B")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-sweeps", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_align)

    sp = common(sub.add_parser("eval", help="loss and accuracy of a checkpoint"))
    sp.add_argument("checkpoint")
    sp.add_argument("--split", choices=["train", "val"], default="val")
    sp.set_defaults(func=cmd_eval)

    for name in ("scan", "drift"):
        sp = common(sub.add_parser(name, help="landscape scans" if name == "scan" else "drift diagnostic"))
        if name == "scan":
            sp.add_argument("kind", choices=["path", "plane", "drift"])
        else:
            sp.set_defaults(kind="drift")
        sp.add_argument("--a")
        sp.add_argument("--b")
        sp.add_argument("--c")
        sp.add_argument("--points", type=int, default=25)
        sp.add_argument("--grid", type=int, default=21)
        sp.add_argument("--margin", type=float, default=0.2)
        sp.add_argument("--source")
        sp.add_argument("--target-init")
        sp.add_argument("--perms")
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=cmd_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, NumericError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
