"""Cross-engine agreement: exported file vs the training framework.

The exported DPWN is handed to the `diffpath` command line tool, which
classifies probe images and prints logits as JSON. Those logits are
compared against this package's own torch forward pass on the same
uint8 probes. Any layout slip (cout/cin swap, kh/kw transpose, row- vs
column-major flatten) shows up as a large logit gap, so the agreement
bound doubles as a serialization test. Tolerance: max abs diff 1e-4.
"""

from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import torch

from .archs import ChainNet
from .data import Split, synth_digits, synth_objects, write_cifar_dataset, \
    write_idx_dataset
from .errors import ExportError, TrainerError
from .export import export_dpwn
from .train import Checkpoint

__all__ = ["TOLERANCE", "engine_available", "probe_split",
           "write_probe_dataset", "run_classify", "own_logits",
           "cross_engine_check"]

TOLERANCE = 1e-4
ENGINE = "diffpath"


def engine_available() -> bool:
    return shutil.which(ENGINE) is not None


def probe_split(input_shape, count: int = 16, seed: int = 0) -> Split:
    """Half structured images, half uniform noise, all uint8."""
    c, h, w = input_shape
    structured = count // 2
    if (c, h, w) == (1, 28, 28):
        images = synth_digits(structured, seed).images
    elif (c, h, w) == (3, 32, 32):
        images = synth_objects(structured, seed).images
    else:
        images = np.zeros((0, c, h, w), dtype=np.uint8)
        structured = 0
    rng = np.random.default_rng(seed + 1)
    noise = rng.integers(0, 256, (count - structured, c, h, w), dtype=np.uint8)
    probes = np.concatenate([images, noise]) if structured else noise
    labels = np.zeros(len(probes), dtype=np.int64)
    return Split(probes, labels)


def write_probe_dataset(workdir, split: Split, classes: int = 10) -> Path:
    c = split.images.shape[1]
    if c == 1:
        return write_idx_dataset(workdir, split, classes, tag="probes")
    if split.images.shape[1:] == (3, 32, 32):
        return write_cifar_dataset(workdir, split, classes, tag="probes")
    raise ExportError(f"no probe container for image shape "
                      f"{split.images.shape[1:]}")


def run_classify(model_path, manifest_path, index: int) -> np.ndarray:
    """One `diffpath classify` call; returns the printed logits."""
    cmd = [ENGINE, "classify", "--model", str(model_path),
           "--dataset", str(manifest_path), "--index", str(index)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise TrainerError(f"{' '.join(cmd)} failed "
                           f"(rc={proc.returncode}): {proc.stderr.strip()}")
    payload = json.loads(proc.stdout)
    return np.asarray(payload["logits"], dtype=np.float64)


def own_logits(ckpt: Checkpoint, split: Split) -> np.ndarray:
    net = ChainNet(ckpt.chain)
    net.load_state_dict(ckpt.state)
    net.eval()
    x = torch.from_numpy(split.images.astype(np.float32) / 255.0)
    with torch.no_grad():
        return net(x).numpy().astype(np.float64)


def cross_engine_check(ckpt: Checkpoint, workdir, count: int = 16,
                       seed: int = 0, tolerance: float = TOLERANCE) -> dict:
    """Export, classify every probe in both engines, report the gap."""
    workdir = Path(workdir)
    if not engine_available():
        raise TrainerError(f"{ENGINE} executable not on PATH")
    split = probe_split(ckpt.input_shape, count, seed)
    manifest = write_probe_dataset(workdir / "probes", split, ckpt.classes)
    model_path, _ = export_dpwn(ckpt, workdir / "model.dpwn")

    mine = own_logits(ckpt, split)
    diffs, predictions_agree = [], 0
    for i in range(len(split)):
        theirs = run_classify(model_path, manifest, i)
        if theirs.shape != mine[i].shape:
            raise ExportError(f"probe {i}: engine returned "
                              f"{theirs.shape[0]} logits, expected "
                              f"{mine[i].shape[0]}")
        diffs.append(float(np.abs(theirs - mine[i]).max()))
        predictions_agree += int(theirs.argmax() == mine[i].argmax())
    return {
        "probes": len(split),
        "max_abs_diff": max(diffs),
        "per_probe": diffs,
        "predictions_agree": predictions_agree,
        "tolerance": tolerance,
        "passed": max(diffs) <= tolerance,
        "model": str(model_path),
    }
