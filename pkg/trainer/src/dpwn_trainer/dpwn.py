"""Writer (and verification reader) for the DPWN weight container.

Byte layout: magic "DPWN" (4 bytes), version u32 little-endian (=1),
header length u64 little-endian, compact sorted-key UTF-8 JSON header,
then raw little-endian float32 tensor payloads packed in insertion
order. Header schema:

    {"arch": [{"name","kind","params"}...],
     "input_shape": [C,H,W], "classes": N,
     "tensors": [{"name","shape","offset","len"}...]}

This is an independent implementation of the layout the inference
package consumes; compatibility is enforced by the cross-engine tests,
which feed files written here to the `diffpath` command line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContainerError

__all__ = ["MAGIC", "VERSION", "write_container", "read_container"]

MAGIC = b"DPWN"
VERSION = 1
_PREFIX = 16


def write_container(path, tensors: dict[str, np.ndarray], *, arch: list[dict],
                    input_shape, classes: int) -> None:
    entries = []
    payload = bytearray()
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": len(payload), "len": len(raw)})
        payload += raw
    header = {"arch": arch, "input_shape": list(input_shape),
              "classes": int(classes), "tensors": entries}
    hraw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(VERSION.to_bytes(4, "little"))
        f.write(len(hraw).to_bytes(8, "little"))
        f.write(hraw)
        f.write(bytes(payload))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back a container for round-trip checks. Raises ContainerError."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX:
        raise ContainerError(f"{path}: {len(raw)} bytes is shorter than the prefix")
    if raw[:4] != MAGIC:
        raise ContainerError(f"{path}: magic {raw[:4]!r}")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise ContainerError(f"{path}: version {version}")
    hlen = int.from_bytes(raw[8:16], "little")
    if _PREFIX + hlen > len(raw):
        raise ContainerError(f"{path}: header runs past end of file")
    try:
        header = json.loads(raw[_PREFIX:_PREFIX + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: bad header ({e})") from e
    if not isinstance(header, dict) or not isinstance(header.get("tensors"), list):
        raise ContainerError(f"{path}: header is not a tensor table")
    payload = raw[_PREFIX + hlen:]
    tensors = {}
    for i, ent in enumerate(header["tensors"]):
        if (not isinstance(ent, dict) or not isinstance(ent.get("name"), str)
                or not isinstance(ent.get("shape"), list)
                or not all(isinstance(d, int) and d >= 0 for d in ent["shape"])
                or not isinstance(ent.get("offset"), int)
                or not isinstance(ent.get("len"), int) or ent["offset"] < 0):
            raise ContainerError(f"{path}: malformed tensor entry {i}")
        count = int(np.prod(ent["shape"], dtype=np.int64))
        if ent["len"] != count * 4 or ent["offset"] + ent["len"] > len(payload):
            raise ContainerError(f"{path}: bad bounds for {ent['name']!r}")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=ent["offset"])
        tensors[ent["name"]] = arr.reshape(ent["shape"]).astype(np.float32)
    return header, tensors
