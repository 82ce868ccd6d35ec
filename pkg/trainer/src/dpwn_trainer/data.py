"""Datasets: real MNIST/CIFAR-10 when present, procedural stand-ins always.

The synthetic generators produce class-structured images with the same
shapes and dtypes as the real datasets (1x28x28 and 3x32x32 uint8), so
every downstream stage (training, export, cross-engine checks, group
studies) runs end to end on machines where the real archives cannot be
fetched. They are stand-ins, not simulations of the real data.

Interchange with the inference package happens through files only:
`write_idx_dataset` / `write_cifar_dataset` emit the IDX / CIFAR binary
containers plus the manifest JSON its CLI consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetUnavailableError

__all__ = ["Split", "synth_digits", "synth_objects", "load_real",
           "load_dataset", "write_idx_dataset", "write_cifar_dataset",
           "DATASET_SHAPES"]

DATASET_SHAPES = {
    "mnist": (1, 28, 28), "synth-digits": (1, 28, 28),
    "cifar10": (3, 32, 32), "synth-objects": (3, 32, 32),
}


@dataclass
class Split:
    images: np.ndarray   # uint8 (N,C,H,W)
    labels: np.ndarray   # int64 (N,)

    def __len__(self):
        return len(self.images)


# ---------------------------------------------------------------------------
# synthetic digits: bar/diagonal stroke combinations, one combo per class


_DIGIT_STROKES = [
    ("h2", "v"), ("v",), ("h2", "d"), ("h2", "v", "d"), ("h1", "v"),
    ("h1", "d"), ("d", "a"), ("h2",), ("h1", "v", "a"), ("a",),
]


def _digit_template(cls: int) -> np.ndarray:
    img = np.zeros((28, 28), dtype=np.float64)
    for stroke in _DIGIT_STROKES[cls]:
        if stroke == "h1":
            img[13:16, 5:23] = 1.0
        elif stroke == "h2":
            img[6:9, 5:23] = 1.0
            img[20:23, 5:23] = 1.0
        elif stroke == "v":
            img[5:23, 13:16] = 1.0
        elif stroke == "d":
            for i in range(18):
                img[5 + i, 5 + i:8 + i] = 1.0
        elif stroke == "a":
            for i in range(18):
                img[22 - i, 5 + i:8 + i] = 1.0
    return img


def synth_digits(count: int, seed: int) -> Split:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, count).astype(np.int64)
    images = np.zeros((count, 1, 28, 28), dtype=np.uint8)
    templates = [_digit_template(c) for c in range(10)]
    for i, cls in enumerate(labels):
        canvas = templates[cls] * rng.uniform(0.65, 1.0)
        dy, dx = rng.integers(-3, 4, 2)
        canvas = np.roll(np.roll(canvas, dy, axis=0), dx, axis=1)
        canvas = canvas * 255 + rng.normal(0, 12, (28, 28))
        images[i, 0] = np.clip(canvas, 0, 255).astype(np.uint8)
    return Split(images, labels)


# ---------------------------------------------------------------------------
# synthetic objects: five shapes x two palettes on noisy backgrounds


def _shape_mask(kind: int, rng) -> np.ndarray:
    yy, xx = np.mgrid[0:32, 0:32]
    cy, cx = rng.integers(12, 20, 2)
    r = rng.integers(6, 10)
    if kind == 0:                                   # disk
        return ((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r
    if kind == 1:                                   # square
        return (np.abs(yy - cy) <= r - 1) & (np.abs(xx - cx) <= r - 1)
    if kind == 2:                                   # cross
        return ((np.abs(yy - cy) <= 2) & (np.abs(xx - cx) <= r)) | \
               ((np.abs(xx - cx) <= 2) & (np.abs(yy - cy) <= r))
    if kind == 3:                                   # horizontal stripes
        return (yy % 6 < 3) & (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    return (xx % 6 < 3) & (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)


_PALETTES = [(210, 60, 50), (40, 90, 215)]          # warm, cool


def synth_objects(count: int, seed: int) -> Split:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, count).astype(np.int64)
    images = np.zeros((count, 3, 32, 32), dtype=np.uint8)
    for i, cls in enumerate(labels):
        shape, palette = int(cls) % 5, int(cls) // 5
        img = rng.normal(70, 18, (3, 32, 32))
        mask = _shape_mask(shape, rng)
        base = np.array(_PALETTES[palette], dtype=np.float64)
        color = base * rng.uniform(0.8, 1.15) + rng.normal(0, 10, 3)
        img[:, mask] = color[:, None] + rng.normal(0, 8, (3, int(mask.sum())))
        images[i] = np.clip(img, 0, 255).astype(np.uint8)
    return Split(images, labels)


# ---------------------------------------------------------------------------
# real datasets through torchvision, with a typed failure mode


def load_real(name: str, data_dir, train: bool, download: bool = True) -> Split:
    import torchvision

    try:
        if name == "mnist":
            ds = torchvision.datasets.MNIST(str(data_dir), train=train,
                                            download=download)
            images = ds.data.numpy()[:, None]
            labels = ds.targets.numpy().astype(np.int64)
        elif name == "cifar10":
            ds = torchvision.datasets.CIFAR10(str(data_dir), train=train,
                                              download=download)
            images = ds.data.transpose(0, 3, 1, 2)
            labels = np.asarray(ds.targets, dtype=np.int64)
        else:
            raise DatasetUnavailableError(f"unknown real dataset {name!r}")
    except DatasetUnavailableError:
        raise
    except Exception as e:
        raise DatasetUnavailableError(
            f"{name}: not present under {data_dir} and not downloadable "
            f"({type(e).__name__}: {e})") from e
    return Split(np.ascontiguousarray(images, dtype=np.uint8), labels)


def load_dataset(name: str, *, count: int = 2400, seed: int = 0,
                 data_dir=None, train: bool = True,
                 download: bool = True) -> Split:
    """Uniform entry point for {mnist, cifar10, synth-digits, synth-objects}."""
    if name == "synth-digits":
        return synth_digits(count, seed + (0 if train else 1))
    if name == "synth-objects":
        return synth_objects(count, seed + (0 if train else 1))
    if name in ("mnist", "cifar10"):
        if data_dir is None:
            raise DatasetUnavailableError(f"{name}: no data directory given")
        return load_real(name, data_dir, train, download)
    raise DatasetUnavailableError(f"unknown dataset {name!r}")


# ---------------------------------------------------------------------------
# interchange files for the inference CLI


def _idx_header(magic: int, dims: tuple[int, ...]) -> bytes:
    out = magic.to_bytes(4, "big")
    for d in dims:
        out += int(d).to_bytes(4, "big")
    return out


def write_idx_dataset(out_dir, split: Split, classes: int = 10,
                      tag: str = "export") -> Path:
    """Grayscale split -> images.idx + labels.idx + manifest; returns manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = split.images
    if images.ndim != 4 or images.shape[1] != 1:
        raise DatasetUnavailableError(
            f"IDX export needs (N,1,H,W) uint8 images, got {images.shape}")
    with open(out / "images.idx", "wb") as f:
        f.write(_idx_header(0x803, (len(images),) + images.shape[2:]))
        f.write(np.ascontiguousarray(images[:, 0]).tobytes())
    with open(out / "labels.idx", "wb") as f:
        f.write(_idx_header(0x801, (len(images),)))
        f.write(split.labels.astype(np.uint8).tobytes())
    manifest = out / "data.json"
    manifest.write_text(json.dumps(
        {"kind": "idx", "images": "images.idx", "labels": "labels.idx",
         "classes": classes, "split": tag}, sort_keys=True, indent=1) + "\n")
    return manifest


def write_cifar_dataset(out_dir, split: Split, classes: int = 10,
                        tag: str = "export") -> Path:
    """RGB split -> 3073-byte records + manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = split.images
    if images.ndim != 4 or images.shape[1:] != (3, 32, 32):
        raise DatasetUnavailableError(
            f"CIFAR export needs (N,3,32,32) uint8 images, got {images.shape}")
    with open(out / "batch.bin", "wb") as f:
        for img, label in zip(images, split.labels):
            f.write(bytes([int(label)]))
            f.write(np.ascontiguousarray(img).tobytes())
    manifest = out / "data.json"
    manifest.write_text(json.dumps(
        {"kind": "cifar10-bin", "files": ["batch.bin"],
         "classes": classes, "split": tag}, sort_keys=True, indent=1) + "\n")
    return manifest
