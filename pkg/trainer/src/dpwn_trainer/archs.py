"""Trainable architectures and their exported layer chains.

Each config is described twice, consistently: as an ordered chain of
layer dicts ({"name","kind","params"}) that goes verbatim into the DPWN
header, and as a torch module whose submodules carry exactly the chain's
conv/linear names, so state_dict keys map 1:1 onto exported tensor
names ("conv1_1.weight" -> "conv1_1/weight").

Semantics the consumer expects: conv stride 1 with pad (k-1)/2, ReLU,
2x2/stride-2 max pooling with ceil sizing (odd edges pool over the
remaining strip), row-major flatten, dense head.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ExportError

__all__ = ["ChainNet", "chain_for", "expected_tensors", "tiny_conv_chain",
           "reference_vgg16_chain", "ARCH_NAMES"]


def _conv(name, cin, cout, k=3):
    return {"name": name, "kind": "conv",
            "params": {"cout": cout, "cin": cin, "k": k, "pad": (k - 1) // 2}}


def _relu(name):
    return {"name": name, "kind": "relu", "params": {}}


def _pool(name):
    return {"name": name, "kind": "maxpool", "params": {}}


def _linear(name, fin, fout):
    return {"name": name, "kind": "linear", "params": {"out": fout, "in": fin}}


def _pooled(h: int, times: int) -> int:
    for _ in range(times):
        h = (h + 1) // 2
    return h


def tiny_conv_chain(input_shape=(3, 32, 32), classes=10) -> list[dict]:
    c = input_shape[0]
    chain = []
    for i, cout in enumerate([16, 32, 32, 64], start=1):
        chain += [_conv(f"conv{i}", c, cout), _relu(f"conv{i}_relu"),
                  _pool(f"maxpl{i}")]
        c = cout
    feat = 64 * _pooled(input_shape[1], 4) * _pooled(input_shape[2], 4)
    chain.append({"name": "flatten", "kind": "flatten", "params": {}})
    chain.append(_linear("logits", feat, classes))
    return chain


def reference_vgg16_chain(input_shape=(3, 32, 32), classes=10) -> list[dict]:
    blocks = [("conv1", 64, 2), ("conv2", 128, 2), ("conv3", 256, 3),
              ("conv4", 512, 3), ("conv5", 512, 3)]
    c = input_shape[0]
    chain = []
    for bi, (prefix, cout, convs) in enumerate(blocks, start=1):
        for i in range(1, convs + 1):
            chain += [_conv(f"{prefix}_{i}", c, cout), _relu(f"{prefix}_{i}_relu")]
            c = cout
        chain.append(_pool(f"maxpl{bi}"))
    feat = 512 * _pooled(input_shape[1], 5) * _pooled(input_shape[2], 5)
    chain.append({"name": "flatten", "kind": "flatten", "params": {}})
    chain.append(_linear("fc1", feat, 256))
    chain.append(_relu("fc1_relu"))
    chain.append(_linear("logits", 256, classes))
    return chain


ARCH_NAMES = {"tiny_conv": tiny_conv_chain,
              "reference_vgg16": reference_vgg16_chain}


def chain_for(arch: str, input_shape, classes: int) -> list[dict]:
    if arch not in ARCH_NAMES:
        raise ExportError(f"unknown architecture {arch!r}; "
                          f"known: {sorted(ARCH_NAMES)}")
    return ARCH_NAMES[arch](tuple(input_shape), classes)


def expected_tensors(chain: list[dict]) -> dict[str, tuple[int, ...]]:
    """Tensor name -> shape contract implied by a chain."""
    out: dict[str, tuple[int, ...]] = {}
    for layer in chain:
        kind, name, p = layer["kind"], layer["name"], layer["params"]
        if kind == "conv":
            out[f"{name}/weight"] = (p["cout"], p["cin"], p["k"], p["k"])
            out[f"{name}/bias"] = (p["cout"],)
        elif kind == "linear":
            out[f"{name}/weight"] = (p["out"], p["in"])
            out[f"{name}/bias"] = (p["out"],)
        elif kind not in ("relu", "maxpool", "flatten"):
            raise ExportError(f"unknown layer kind {kind!r} in chain")
    return out


class ChainNet(nn.Module):
    """Torch module that executes a layer chain verbatim."""

    def __init__(self, chain: list[dict]):
        super().__init__()
        self.chain = chain
        for layer in chain:
            kind, p = layer["kind"], layer["params"]
            if kind == "conv":
                self.add_module(layer["name"], nn.Conv2d(
                    p["cin"], p["cout"], p["k"], padding=p["pad"]))
            elif kind == "linear":
                self.add_module(layer["name"], nn.Linear(p["in"], p["out"]))
            elif kind not in ("relu", "maxpool", "flatten"):
                raise ExportError(f"unknown layer kind {kind!r} in chain")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.chain:
            kind = layer["kind"]
            if kind in ("conv", "linear"):
                x = getattr(self, layer["name"])(x)
            elif kind == "relu":
                x = F.relu(x)
            elif kind == "maxpool":
                x = F.max_pool2d(x, 2, 2, ceil_mode=True)
            elif kind == "flatten":
                x = x.flatten(1)
        return x
