"""Seeded CPU training for the two supported architectures.

`train_reference` is the single entry point: pick a dataset, an epoch
budget, and a seed, get back a checkpoint whose tensors are ready for
container export. Runs are deterministic for a fixed seed and thread
count, so exporting two checkpoints from identical configs must produce
identical manifest hashes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .archs import ChainNet, chain_for
from .data import DATASET_SHAPES, Split, load_dataset
from .errors import DatasetUnavailableError, DivergenceError, ExportError

__all__ = ["TrainConfig", "Checkpoint", "train_reference",
           "save_checkpoint", "load_checkpoint", "evaluate"]

FRAMEWORK = f"torch-{torch.__version__.split('+')[0]}"


@dataclass
class TrainConfig:
    dataset: str
    epochs: int = 2
    seed: int = 0
    arch: str = "tiny_conv"
    batch_size: int = 32
    lr: float = 3e-3
    train_count: int = 2400          # synthetic datasets only
    val_count: int = 400
    data_dir: str | None = None      # real datasets only
    download: bool = True


@dataclass
class Checkpoint:
    arch: str
    input_shape: tuple
    classes: int
    chain: list
    state: dict                      # torch state_dict, cpu tensors
    meta: dict = field(default_factory=dict)


def _to_tensor(split: Split) -> tuple[torch.Tensor, torch.Tensor]:
    # uint8/255 with no mean/std shift: exactly the preprocessing the
    # inference CLI applies to a manifest without mean/std entries
    x = torch.from_numpy(split.images.astype(np.float32) / 255.0)
    y = torch.from_numpy(split.labels)
    return x, y


def evaluate(net: ChainNet, split: Split, batch: int = 256) -> float:
    x, y = _to_tensor(split)
    hits = 0
    net.eval()
    with torch.no_grad():
        for i in range(0, len(y), batch):
            pred = net(x[i:i + batch]).argmax(dim=1)
            hits += int((pred == y[i:i + batch]).sum())
    return hits / max(len(y), 1)


def _load_splits(cfg: TrainConfig) -> tuple[Split, Split]:
    if cfg.dataset.startswith("synth-"):
        train = load_dataset(cfg.dataset, count=cfg.train_count,
                             seed=cfg.seed, train=True)
        val = load_dataset(cfg.dataset, count=cfg.val_count,
                           seed=cfg.seed, train=False)
    else:
        train = load_dataset(cfg.dataset, data_dir=cfg.data_dir, train=True,
                             download=cfg.download)
        val = load_dataset(cfg.dataset, data_dir=cfg.data_dir, train=False,
                           download=cfg.download)
    return train, val


def train_reference(dataset: str, epochs: int = 2, seed: int = 0,
                    **overrides) -> Checkpoint:
    """Train on {mnist, cifar10, synth-digits, synth-objects}; see TrainConfig."""
    cfg = TrainConfig(dataset=dataset, epochs=epochs, seed=seed, **overrides)
    if cfg.dataset not in DATASET_SHAPES:
        raise DatasetUnavailableError(
            f"no input shape known for dataset {cfg.dataset!r}")
    input_shape = DATASET_SHAPES[cfg.dataset]
    chain = chain_for(cfg.arch, input_shape, classes=10)

    torch.manual_seed(cfg.seed)
    net = ChainNet(chain)
    train, val = _load_splits(cfg)
    x, y = _to_tensor(train)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)

    for epoch in range(cfg.epochs):
        net.train()
        order = torch.randperm(len(y), generator=gen)
        for i in range(0, len(y), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(net(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} step {i // cfg.batch_size}; "
                    f"aborting run (dataset={cfg.dataset}, lr={cfg.lr})")
            loss.backward()
            opt.step()

    acc = evaluate(net, val)
    state = {k: v.detach().cpu() for k, v in net.state_dict().items()}
    return Checkpoint(
        arch=cfg.arch, input_shape=input_shape, classes=10, chain=chain,
        state=state,
        meta={"framework": FRAMEWORK, "dataset": cfg.dataset,
              "epochs": cfg.epochs, "seed": cfg.seed,
              "val_accuracy": round(acc, 6), "val_count": len(val)})


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"arch": ckpt.arch, "input_shape": list(ckpt.input_shape),
                "classes": ckpt.classes, "chain": ckpt.chain,
                "state": ckpt.state, "meta": ckpt.meta}, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
        return Checkpoint(arch=blob["arch"],
                          input_shape=tuple(blob["input_shape"]),
                          classes=int(blob["classes"]), chain=blob["chain"],
                          state=blob["state"], meta=blob["meta"])
    except (OSError, RuntimeError, KeyError, TypeError, ValueError) as e:
        raise ExportError(f"{path}: not a readable checkpoint "
                          f"({type(e).__name__}: {e})") from e
