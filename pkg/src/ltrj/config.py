"""Experiment configuration: one JSON document, validated before any compute."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import Dataset, data_root, load_mnist, mnist_available, split_train_val, synth_blobs
from .optim import SGDConfig
from .transfer import LINEAR_SCHEDULES, TRANSFER_METHODS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "mnist"
    root: str | None = None
    num_classes: int = 4
    per_class: int = 250
    dim: int = 16
    spread: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mnist", "blobs"):
            raise ConfigError(f"dataset.kind must be 'mnist' or 'blobs', got {self.kind!r}")


@dataclass(frozen=True)
class TransferConfig:
    method: str = "gmt"
    T: int = 10
    schedule: str = "cosine"
    trajectory: str = "linear"
    batch_size: int = 128
    seed: int = 0
    max_sweeps: int = 100
    layer_order_seed: int = 0

    def __post_init__(self):
        if self.method not in TRANSFER_METHODS:
            raise ConfigError(f"transfer.method must be one of {TRANSFER_METHODS}")
        if self.schedule not in LINEAR_SCHEDULES:
            raise ConfigError(f"transfer.schedule must be one of {LINEAR_SCHEDULES}")
        if self.trajectory not in ("linear", "actual"):
            raise ConfigError("transfer.trajectory must be 'linear' or 'actual'")
        if self.T < 1 or self.batch_size < 1 or self.max_sweeps < 1:
            raise ConfigError("transfer.T, batch_size and max_sweeps must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    hidden: tuple[int, ...] = (4096,)
    split_seed: int = 0
    init_seed: int = 0
    target_init_seed: int = 1
    sgd: SGDConfig = field(default_factory=SGDConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    output_dir: str = "runs/default"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must be a non-empty list of positive widths")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


_NESTED = {"dataset": DatasetConfig, "sgd": SGDConfig, "transfer": TransferConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if cls is ExperimentConfig and k in _NESTED:
            v = _build(_NESTED[k], v, k)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def load(path: str | None, overrides: list[str] | None = None) -> ExperimentConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(apply_overrides(data, overrides or []))


def replace(cfg, **changes):
    return dataclasses.replace(cfg, **changes)


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Training and validation sets (9:1 split of the training data)."""
    d = cfg.dataset
    if d.kind == "blobs":
        full = synth_blobs(d.num_classes, d.per_class, d.dim, d.spread, d.seed)
    else:
        root = data_root(d.root)
        if not mnist_available(root):
            raise ConfigError(f"MNIST IDX files not found under {root} (set dataset.root or LTRJ_DATA_DIR)")
        full = load_mnist(root)
    return split_train_val(full, cfg.split_seed)


def dims_for(cfg: ExperimentConfig, ds: Dataset) -> tuple[int, ...]:
    return (ds.dim, *cfg.hidden, ds.num_classes)
