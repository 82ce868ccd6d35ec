"""Binary PGM/PPM output plus the small resize helper Grad-CAM needs."""

from __future__ import annotations

import numpy as np

from .errors import BadMagicError, FormatError, TruncatedFileError

__all__ = ["write_pnm", "read_pnm", "bilinear_resize"]


def write_pnm(array: np.ndarray, path) -> None:
    """Write [H,W] as binary PGM (P5) or [3,H,W] as binary PPM (P6).

    Values must already be normalized to [0,1]; they are quantized to
    maxval 255.
    """
    arr = np.asarray(array, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"write_pnm: values outside [0,1] ({arr.min()}..{arr.max()})")
    q = np.rint(arr * 255.0).astype(np.uint8)
    if q.ndim == 2:
        magic, h, w, payload = b"P5", q.shape[0], q.shape[1], q.tobytes()
    elif q.ndim == 3 and q.shape[0] == 3:
        h, w = q.shape[1:]
        magic, payload = b"P6", q.transpose(1, 2, 0).tobytes()  # interleaved RGB
    else:
        raise ValueError(f"write_pnm: expected [H,W] or [3,H,W], got {q.shape}")
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(payload)


def read_pnm(path) -> np.ndarray:
    """Read binary PGM/PPM back as uint8 [H,W] or [3,H,W]."""
    raw = open(path, "rb").read()
    if raw[:2] not in (b"P5", b"P6"):
        raise BadMagicError(f"{path}: not a binary PGM/PPM")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: bad header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    channels = 1 if raw[:2] == b"P5" else 3
    need = w * h * channels
    data = np.frombuffer(raw, dtype=np.uint8, count=-1, offset=pos)
    if data.size < need:
        raise TruncatedFileError(f"{path}: payload {data.size} < {need}")
    data = data[:need]
    if channels == 1:
        return data.reshape(h, w)
    return data.reshape(h, w, 3).transpose(2, 0, 1)


def bilinear_resize(array: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinearly resample [H,W] to out_hw with half-pixel alignment."""
    arr = np.asarray(array, dtype=np.float64)
    h, w = arr.shape
    ho, wo = out_hw
    ys = np.clip((np.arange(ho) + 0.5) * h / ho - 0.5, 0, h - 1)
    xs = np.clip((np.arange(wo) + 0.5) * w / wo - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bot = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)
