"""DPWN weight container: read, write, validate.

Byte layout: magic "DPWN" (4 bytes), version u32 little-endian (=1),
header length u64 little-endian, UTF-8 JSON header, then a raw
little-endian float32 payload. Header schema:

    {"arch": [{"name","kind","params"}...],
     "input_shape": [C,H,W], "classes": N,
     "tensors": [{"name","shape","offset","len"}...]}

Tensor offsets/lengths are in bytes relative to the payload start, and
every len must equal prod(shape)*4. Each way a file can be malformed is
reported with its own error type.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .arch import LayerSpec, ModelSpec
from .errors import (BadMagicError, HeaderError, ShapeChainError,
                     TruncatedFileError, UnsupportedVersionError)

__all__ = [
    "MAGIC", "VERSION",
    "read_container", "write_container",
    "load_model", "write_model", "model_from_header",
]

MAGIC = b"DPWN"
VERSION = 1
_PREFIX_LEN = 16  # magic + version + header length


def write_container(path, tensors: dict[str, np.ndarray], *, arch: list[dict],
                    input_shape: tuple[int, int, int], classes: int,
                    extra: dict | None = None) -> None:
    """Write a DPWN file. Tensor payloads are packed in name order."""
    entries = []
    payload = bytearray()
    for name in tensors:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": len(payload), "len": len(raw)})
        payload += raw
    header = {"arch": arch, "input_shape": list(input_shape),
              "classes": int(classes), "tensors": entries}
    if extra:
        header.update(extra)
    hraw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(VERSION.to_bytes(4, "little"))
        f.write(len(hraw).to_bytes(8, "little"))
        f.write(hraw)
        f.write(bytes(payload))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a DPWN file into (header dict, {tensor name: float32 array})."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX_LEN:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, need at least {_PREFIX_LEN}")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: magic {raw[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}, expected {VERSION}")
    hlen = int.from_bytes(raw[8:16], "little")
    if _PREFIX_LEN + hlen > len(raw):
        raise TruncatedFileError(f"{path}: header length {hlen} runs past end of file")
    try:
        header = json.loads(raw[_PREFIX_LEN:_PREFIX_LEN + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HeaderError(f"{path}: header is not UTF-8 JSON ({e})") from e
    if not isinstance(header, dict):
        raise HeaderError(f"{path}: header is not a JSON object")
    for key in ("arch", "input_shape", "classes", "tensors"):
        if key not in header:
            raise HeaderError(f"{path}: header missing {key!r}")
    if not isinstance(header["tensors"], list):
        raise HeaderError(f"{path}: tensors is not a list")

    payload = raw[_PREFIX_LEN + hlen:]
    tensors: dict[str, np.ndarray] = {}
    for ent in header["tensors"]:
        if not isinstance(ent, dict) or not {"name", "shape", "offset", "len"} <= set(ent):
            raise HeaderError(f"{path}: malformed tensor entry {ent!r}")
        name, shape, offset, length = ent["name"], ent["shape"], ent["offset"], ent["len"]
        if not isinstance(name, str) or name in tensors:
            raise HeaderError(f"{path}: bad or duplicate tensor name {name!r}")
        if (not isinstance(shape, list) or not shape
                or any(not isinstance(e, int) or e < 1 for e in shape)):
            raise HeaderError(f"{path}: bad shape {shape!r} for {name}")
        if not isinstance(offset, int) or not isinstance(length, int) or offset < 0 or length < 0:
            raise HeaderError(f"{path}: bad offset/len for {name}")
        count = int(np.prod(shape, dtype=np.int64))
        if length != count * 4:
            raise HeaderError(f"{path}: {name} len {length} != prod(shape)*4 = {count * 4}")
        if offset + length > len(payload):
            raise TruncatedFileError(f"{path}: {name} extends past end of payload")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float32)
    return header, tensors


def model_from_header(header: dict, name: str = "model") -> ModelSpec:
    """Build and validate a ModelSpec from a container header."""
    layers = []
    if not isinstance(header.get("arch"), list) or not header["arch"]:
        raise HeaderError("header arch is empty or not a list")
    for ent in header["arch"]:
        if not isinstance(ent, dict) or "name" not in ent or "kind" not in ent:
            raise HeaderError(f"malformed arch entry {ent!r}")
        kind, params = ent["kind"], ent.get("params", {})
        if kind == "conv":
            layers.append(LayerSpec(ent["name"], "conv", cout=params.get("cout", 0),
                                    cin=params.get("cin", 0), k=params.get("k", 0),
                                    pad=params.get("pad", 0)))
        elif kind == "linear":
            layers.append(LayerSpec(ent["name"], "linear",
                                    out_features=params.get("out", 0),
                                    in_features=params.get("in", 0)))
        elif kind in ("relu", "maxpool", "flatten"):
            layers.append(LayerSpec(ent["name"], kind))
        else:
            raise HeaderError(f"unknown layer kind {kind!r}")
    ish = header.get("input_shape")
    if not isinstance(ish, list) or len(ish) != 3:
        raise HeaderError(f"bad input_shape {ish!r}")
    # ModelSpec.validate raises ShapeChainError on inconsistent chains
    return ModelSpec(name, layers, tuple(int(e) for e in ish), int(header["classes"]))


def load_model(path) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    """Load a model file: validated ModelSpec plus its weight tensors."""
    header, tensors = read_container(path)
    model = model_from_header(header, name=Path(path).stem)
    for l in model.layers:
        if l.kind == "conv":
            want_w, want_b = (l.cout, l.cin, l.k, l.k), (l.cout,)
        elif l.kind == "linear":
            want_w, want_b = (l.out_features, l.in_features), (l.out_features,)
        else:
            continue
        for suffix, want in (("weight", want_w), ("bias", want_b)):
            key = f"{l.name}/{suffix}"
            if key not in tensors:
                raise ShapeChainError(f"{path}: missing tensor {key}")
            if tensors[key].shape != want:
                raise ShapeChainError(
                    f"{path}: {key} shape {tensors[key].shape} != declared {want}")
    return model, tensors


def write_model(path, model: ModelSpec, weights: dict[str, np.ndarray]) -> None:
    """Write weights for a ModelSpec as a DPWN file."""
    write_container(path, weights, arch=model.to_header_arch(),
                    input_shape=model.input_shape, classes=model.classes)
