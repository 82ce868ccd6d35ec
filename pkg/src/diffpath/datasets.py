"""Dataset containers and loaders: IDX, CIFAR-10 binary, M2NIST
synthesis, preprocessing, and the dataset manifest JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, CountMismatchError, HeaderError,
                     TruncatedFileError)

__all__ = [
    "LabeledDataset", "load_idx", "load_idx_multilabel", "load_cifar10_bin",
    "write_idx_images", "write_idx_labels", "write_idx_multilabel",
    "write_cifar10_bin", "gen_m2nist", "preprocess", "Preprocessing",
    "load_manifest", "write_manifest",
]

_IDX_MAGIC_IMAGES = 0x00000803   # ubyte, 3 dims
_IDX_MAGIC_LABELS = 0x00000801   # ubyte, 1 dim
_IDX_MAGIC_MULTI = 0x00000802    # ubyte, 2 dims (multi-hot label rows)


@dataclass
class LabeledDataset:
    """uint8 images (N,C,H,W); labels are class indices, or multi-hot rows."""
    images: np.ndarray
    labels: np.ndarray
    classes: int
    split: str = ""
    multilabel: bool = False

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_idx(path, expect_magic: int, ndims: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, need {header} for header")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expect_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndims)]
    if any(d < 1 for d in dims):
        raise HeaderError(f"{path}: non-positive dimension in {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < count:
        raise TruncatedFileError(f"{path}: payload {len(raw) - header} < declared {count}")
    if len(raw) - header > count:
        raise HeaderError(f"{path}: {len(raw) - header - count} trailing bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, classes: int = 10, split: str = "") -> LabeledDataset:
    """Load an IDX image/label pair (big-endian, ubyte)."""
    images = _read_idx(images_path, _IDX_MAGIC_IMAGES, 3)
    labels = _read_idx(labels_path, _IDX_MAGIC_LABELS, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path}: {images.shape[0]} images vs {labels.shape[0]} labels")
    n, h, w = images.shape
    return LabeledDataset(images.reshape(n, 1, h, w), labels.astype(np.int64),
                          classes, split)


def load_idx_multilabel(images_path, labels_path, split: str = "") -> LabeledDataset:
    """Load an IDX image file paired with multi-hot label rows."""
    images = _read_idx(images_path, _IDX_MAGIC_IMAGES, 3)
    labels = _read_idx(labels_path, _IDX_MAGIC_MULTI, 2)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path}: {images.shape[0]} images vs {labels.shape[0]} label rows")
    n, h, w = images.shape
    return LabeledDataset(images.reshape(n, 1, h, w), labels.copy(),
                          labels.shape[1], split, multilabel=True)


def load_cifar10_bin(paths, classes: int = 10, split: str = "") -> LabeledDataset:
    """Load CIFAR-10 binary batches: 3073-byte records, channel-major pixels."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    image_parts, label_parts = [], []
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0 or len(raw) % 3073 != 0:
            raise TruncatedFileError(f"{path}: {len(raw)} bytes is not a multiple of 3073")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3073)
        label_parts.append(rec[:, 0].astype(np.int64))
        image_parts.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    return LabeledDataset(np.concatenate(image_parts), np.concatenate(label_parts),
                          classes, split)


def write_idx_images(path, images: np.ndarray) -> None:
    """images uint8 (N,H,W) or (N,1,H,W)."""
    arr = np.asarray(images, dtype=np.uint8)
    if arr.ndim == 4:
        if arr.shape[1] != 1:
            raise ValueError("IDX images are single-channel")
        arr = arr[:, 0]
    with open(path, "wb") as f:
        f.write(_IDX_MAGIC_IMAGES.to_bytes(4, "big"))
        for d in arr.shape:
            f.write(int(d).to_bytes(4, "big"))
        f.write(arr.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(_IDX_MAGIC_LABELS.to_bytes(4, "big"))
        f.write(int(arr.shape[0]).to_bytes(4, "big"))
        f.write(arr.tobytes())


def write_idx_multilabel(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(_IDX_MAGIC_MULTI.to_bytes(4, "big"))
        f.write(int(arr.shape[0]).to_bytes(4, "big"))
        f.write(int(arr.shape[1]).to_bytes(4, "big"))
        f.write(arr.tobytes())


def write_cifar10_bin(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write (N,3,32,32) uint8 images + labels as one CIFAR binary batch."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    rec = np.empty((images.shape[0], 3073), dtype=np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = images.reshape(images.shape[0], -1)
    Path(path).write_bytes(rec.tobytes())


def gen_m2nist(mnist: LabeledDataset, count: int, seed: int,
               canvas: tuple[int, int] = (64, 84)) -> LabeledDataset:
    """Paste 1-3 MNIST digits onto a blank canvas with disjoint boxes.

    Labels are multi-hot over the digit classes present. Deterministic
    under the seed; a digit count whose boxes cannot be placed within
    the retry budget is resampled.
    """
    if len(mnist) == 0:
        raise ValueError("gen_m2nist: empty source dataset")
    ch, cw = canvas
    dh, dw = mnist.images.shape[2:]
    rng = np.random.default_rng(seed)
    images = np.zeros((count, 1, ch, cw), dtype=np.uint8)
    labels = np.zeros((count, mnist.classes), dtype=np.uint8)
    for i in range(count):
        while True:
            n_digits = int(rng.integers(1, 4))
            placed = _place_disjoint(rng, n_digits, ch - dh, cw - dw, dh, dw)
            if placed is not None:
                break
        for y, x in placed:
            j = int(rng.integers(0, len(mnist)))
            patch = mnist.images[j, 0]
            images[i, 0, y:y + dh, x:x + dw] = np.maximum(
                images[i, 0, y:y + dh, x:x + dw], patch)
            labels[i, int(mnist.labels[j])] = 1
    return LabeledDataset(images, labels, mnist.classes, "m2nist", multilabel=True)


def _place_disjoint(rng, n, ymax, xmax, dh, dw, retries: int = 64):
    for _ in range(retries):
        ys = rng.integers(0, ymax + 1, size=n)
        xs = rng.integers(0, xmax + 1, size=n)
        ok = True
        for a in range(n):
            for b in range(a + 1, n):
                if abs(int(ys[a]) - int(ys[b])) < dh and abs(int(xs[a]) - int(xs[b])) < dw:
                    ok = False
        if ok:
            return list(zip(ys.tolist(), xs.tolist()))
    return None


def preprocess(images: np.ndarray, mean=None, std=None) -> np.ndarray:
    """uint8 pixels -> float32 in [0,1], then optional per-channel (x-mean)/std."""
    x = np.asarray(images, dtype=np.float32) / np.float32(255.0)
    caxis = x.ndim - 3  # channel axis for (C,H,W) or (N,C,H,W)
    if mean is not None:
        m = np.asarray(mean, dtype=np.float32)
        x = x - m.reshape((-1,) + (1,) * (x.ndim - caxis - 1))
    if std is not None:
        s = np.asarray(std, dtype=np.float32)
        x = x / s.reshape((-1,) + (1,) * (x.ndim - caxis - 1))
    return x


@dataclass
class Preprocessing:
    mean: list | None = None
    std: list | None = None

    def apply(self, images: np.ndarray) -> np.ndarray:
        return preprocess(images, self.mean, self.std)

    def invert(self, x: np.ndarray) -> np.ndarray:
        """Back to uint8 pixel space, clipping to the valid range."""
        y = np.asarray(x, dtype=np.float32)
        caxis = y.ndim - 3
        if self.std is not None:
            s = np.asarray(self.std, dtype=np.float32)
            y = y * s.reshape((-1,) + (1,) * (y.ndim - caxis - 1))
        if self.mean is not None:
            m = np.asarray(self.mean, dtype=np.float32)
            y = y + m.reshape((-1,) + (1,) * (y.ndim - caxis - 1))
        return np.clip(np.rint(y * 255.0), 0, 255).astype(np.uint8)


def load_manifest(path) -> tuple[LabeledDataset, Preprocessing]:
    """Read a dataset manifest JSON and load the dataset it points to.

    Schema: {"kind": "idx"|"m2nist-idx"|"cifar10-bin", "images": ...,
    "labels": ..., "files": [...], "classes": N, "split": ...,
    "mean": [...], "std": [...]}; paths resolve relative to the manifest.
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise HeaderError(f"{path}: unreadable manifest ({e})") from e
    if not isinstance(manifest, dict) or "kind" not in manifest:
        raise HeaderError(f"{path}: manifest must be an object with a kind")
    base = path.parent
    kind = manifest["kind"]
    classes = int(manifest.get("classes", 10))
    split = manifest.get("split", "")
    if kind == "idx":
        ds = load_idx(base / manifest["images"], base / manifest["labels"], classes, split)
    elif kind == "m2nist-idx":
        ds = load_idx_multilabel(base / manifest["images"], base / manifest["labels"], split)
    elif kind == "cifar10-bin":
        ds = load_cifar10_bin([base / p for p in manifest["files"]], classes, split)
    else:
        raise HeaderError(f"{path}: unknown dataset kind {kind!r}")
    return ds, Preprocessing(manifest.get("mean"), manifest.get("std"))


def write_manifest(path, kind: str, *, classes: int = 10, split: str = "",
                   mean=None, std=None, **paths) -> None:
    manifest = {"kind": kind, "classes": classes, "split": split}
    if mean is not None:
        manifest["mean"] = list(mean)
    if std is not None:
        manifest["std"] = list(std)
    manifest.update(paths)
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
