"""Rotation and occlusion transforms plus invariant/variant group search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset, Preprocessing
from .errors import ShapeError
from .runtime import forward_trace

__all__ = ["rotate", "occlude", "TransformGroup", "build_transform_groups",
           "ROTATE_SWEEP"]

# angle sweep used by the rotation group search
ROTATE_SWEEP = tuple(range(10, 360, 10))


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counterclockwise about the image center.

    Nearest-neighbor sampling, out-of-frame fill 0, size preserved.
    Works on [H,W] or [C,H,W] arrays of any dtype.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    c, h, w = img.shape
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    # source coordinate = center + R(-theta) (out - center)
    sy = np.rint(cy + np.cos(theta) * yy + np.sin(theta) * xx).astype(np.int64)
    sx = np.rint(cx - np.sin(theta) * yy + np.cos(theta) * xx).astype(np.int64)
    valid = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
    out = np.zeros_like(img)
    out[:, valid] = img[:, sy[valid], sx[valid]]
    return out[0] if squeeze else out


def occlude(image: np.ndarray, rect: tuple[int, int, int, int]) -> np.ndarray:
    """Zero the pixels inside rect=(y, x, h, w); the rest are untouched."""
    img = np.asarray(image)
    y, x, rh, rw = rect
    H, W = img.shape[-2:]
    if rh < 0 or rw < 0 or y < 0 or x < 0 or y + rh > H or x + rw > W:
        raise ShapeError(f"occlude: rect {rect} out of bounds for {H}x{W}")
    out = img.copy()
    out[..., y:y + rh, x:x + rw] = 0
    return out


@dataclass
class TransformGroup:
    kind: str                      # rotate | occlude
    original_index: int
    label: int
    original: np.ndarray           # uint8 [C,H,W]
    invariant: np.ndarray
    invariant_desc: tuple          # (degrees,) or (y, x, h, w)
    variant: np.ndarray
    variant_desc: tuple
    variant_prediction: int
    target_index: int
    target: np.ndarray
    target_label: int


def _occlude_sweep(rng, h, w):
    """Seeded rectangles growing from 4x4 up to half the frame."""
    rects = []
    size = 4
    while size * 2 <= min(h, w) or size == 4:
        s_h = min(size, h // 2)
        s_w = min(size, w // 2)
        for _ in range(3):
            y = int(rng.integers(0, h - s_h + 1))
            x = int(rng.integers(0, w - s_w + 1))
            rects.append((y, x, s_h, s_w))
        if size >= min(h, w) // 2:
            break
        size += 2
    return rects


def build_transform_groups(model, weights, dataset: LabeledDataset,
                           kind: str, count: int, seed: int,
                           preproc: Preprocessing | None = None
                           ) -> tuple[list[TransformGroup], bool]:
    """Find (original, invariant, variant, target) quadruples.

    Per correctly classified sample the transform is swept until one
    version preserves the prediction and another changes it; samples
    lacking either are skipped. The target is drawn (seeded) from the
    variant's predicted class. Returns (groups, partial-output flag).
    """
    if kind not in ("rotate", "occlude"):
        raise ValueError(f"unknown transform kind {kind!r}")
    preproc = preproc or Preprocessing()
    labels = dataset.labels
    by_class: dict[int, np.ndarray] = {
        int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}

    def predict(img_u8):
        return forward_trace(model, weights, preproc.apply(img_u8)).predicted

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    groups: list[TransformGroup] = []
    for idx in order:
        if len(groups) >= count:
            break
        idx = int(idx)
        orig = dataset.images[idx]
        label = int(labels[idx])
        if predict(orig) != label:
            continue
        sub_rng = np.random.default_rng([seed, idx])  # per-candidate stream
        if kind == "rotate":
            sweep = [((float(a),), rotate(orig, a)) for a in ROTATE_SWEEP]
        else:
            h, w = orig.shape[-2:]
            sweep = [(r, occlude(orig, r)) for r in _occlude_sweep(sub_rng, h, w)]
        invariant = variant = None
        for desc, img in sweep:
            pred = predict(img)
            if pred == label and invariant is None:
                invariant = (desc, img)
            elif pred != label and variant is None:
                variant = (desc, img, pred)
            if invariant and variant:
                break
        if not invariant or not variant:
            continue
        pool = by_class.get(variant[2])
        if pool is None or len(pool) == 0:
            continue
        tgt = int(pool[int(sub_rng.integers(0, len(pool)))])
        groups.append(TransformGroup(
            kind, idx, label, orig.copy(),
            invariant[1], invariant[0],
            variant[1], variant[0], variant[2],
            tgt, dataset.images[tgt].copy(), int(labels[tgt])))
    return groups, len(groups) < count
