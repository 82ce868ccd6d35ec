"""Checkpoint -> DPWN container + export manifest.

The export path is the contract surface: tensor names and shapes must
match the consumer's declared architecture exactly, so every mismatch
is reported as a typed error naming the offending tensor. Hashing is
done over the little-endian float32 payload bytes, which makes manifest
hashes a determinism check for the whole train+export pipeline.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .archs import ChainNet, chain_for, expected_tensors
from .dpwn import read_container, write_container
from .errors import ExportError
from .train import FRAMEWORK, Checkpoint

__all__ = ["export_dpwn", "checkpoint_tensors", "random_checkpoint",
           "verify_round_trip"]


def checkpoint_tensors(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    """Validated name->float32 array map in chain order.

    Raises ExportError naming the tensor on any missing entry, shape
    mismatch, unexpected extra, or non-finite value.
    """
    want = expected_tensors(ckpt.chain)
    have = {k.replace(".", "/"): v for k, v in ckpt.state.items()}
    extra = sorted(set(have) - set(want))
    if extra:
        raise ExportError(f"checkpoint carries tensors outside the "
                          f"architecture contract: {extra}")
    out: dict[str, np.ndarray] = {}
    for name, shape in want.items():          # chain order, weight then bias
        if name not in have:
            raise ExportError(f"checkpoint is missing tensor {name!r} "
                              f"(expected shape {shape})")
        arr = have[name].detach().cpu().numpy().astype(np.float32)
        if arr.shape != shape:
            raise ExportError(f"tensor {name!r} has shape {arr.shape}, "
                              f"contract requires {shape}")
        if not np.isfinite(arr).all():
            raise ExportError(f"tensor {name!r} contains non-finite values")
        out[name] = arr
    return out


def export_dpwn(ckpt: Checkpoint, out_path) -> tuple[Path, Path]:
    """Write model.dpwn plus its manifest JSON; returns both paths."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tensors = checkpoint_tensors(ckpt)
    write_container(out_path, tensors, arch=ckpt.chain,
                    input_shape=ckpt.input_shape, classes=ckpt.classes)
    manifest = {
        "framework": ckpt.meta.get("framework", FRAMEWORK),
        "arch": ckpt.arch,
        "input_shape": list(ckpt.input_shape),
        "classes": ckpt.classes,
        "training": {k: ckpt.meta.get(k) for k in
                     ("dataset", "epochs", "seed", "val_accuracy")},
        "tensors": [{"name": name, "shape": list(arr.shape),
                     "sha256": hashlib.sha256(
                         arr.astype("<f4").tobytes()).hexdigest()}
                    for name, arr in tensors.items()],
    }
    man_path = out_path.with_suffix(".manifest.json")
    man_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out_path, man_path


def verify_round_trip(ckpt: Checkpoint, dpwn_path) -> None:
    """Re-read an exported file and demand bitwise-equal tensors."""
    tensors = checkpoint_tensors(ckpt)
    header, loaded = read_container(dpwn_path)
    if [e["name"] for e in header["tensors"]] != list(tensors):
        raise ExportError(f"{dpwn_path}: tensor order changed on disk")
    for name, arr in tensors.items():
        got = loaded[name]
        if got.shape != arr.shape or got.tobytes() != arr.astype("<f4").tobytes():
            raise ExportError(f"{dpwn_path}: round trip altered {name!r}")


def random_checkpoint(arch: str = "tiny_conv", input_shape=(3, 32, 32),
                      classes: int = 10, seed: int = 0,
                      scale: float | None = None) -> Checkpoint:
    """Untrained seeded checkpoint; the fast fixture for export and
    cross-engine tests that do not need a real training run."""
    chain = chain_for(arch, input_shape, classes)
    torch.manual_seed(seed)
    net = ChainNet(chain)
    state = {k: v.detach().clone() for k, v in net.state_dict().items()}
    if scale is not None:
        state = {k: (v * scale if v.ndim > 1 else v) for k, v in state.items()}
    return Checkpoint(arch=arch, input_shape=tuple(input_shape),
                      classes=classes, chain=chain, state=state,
                      meta={"framework": FRAMEWORK, "dataset": "fixture",
                            "epochs": 0, "seed": seed, "val_accuracy": None})
