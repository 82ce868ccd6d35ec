"""Architecture descriptions: layer specs, shape chaining, stock configs.

A model is a flat ordered list of layers (no branches). Pathway layers
are the conv and maxpool layers, in order; they are where diffusion
fields are propagated and aggregated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ShapeChainError

__all__ = [
    "LayerSpec",
    "ModelSpec",
    "reference_vgg16",
    "tiny_conv",
    "toy_net",
    "STOCK_ARCHS",
]

KINDS = ("conv", "relu", "maxpool", "flatten", "linear")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind plus the parameters that kind needs."""
    name: str
    kind: str
    cout: int = 0          # conv only
    cin: int = 0           # conv only
    k: int = 0             # conv only
    pad: int = 0           # conv only
    out_features: int = 0  # linear only
    in_features: int = 0   # linear only

    def params(self) -> dict:
        if self.kind == "conv":
            return {"cout": self.cout, "cin": self.cin, "k": self.k, "pad": self.pad}
        if self.kind == "linear":
            return {"out": self.out_features, "in": self.in_features}
        return {}


@dataclass
class ModelSpec:
    """Ordered layers, input shape (C,H,W), class count, pathway layers."""
    name: str
    layers: list[LayerSpec]
    input_shape: tuple[int, int, int]
    classes: int
    pathway_layers: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.pathway_layers:
            self.pathway_layers = [i for i, l in enumerate(self.layers)
                                   if l.kind in ("conv", "maxpool")]
        self.validate()

    def validate(self) -> None:
        """Chain shapes from input to logits; raise ShapeChainError on breaks."""
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ShapeChainError(f"{self.name}: duplicate layer names")
        shape: tuple = tuple(self.input_shape)
        for l in self.layers:
            if l.kind == "conv":
                if len(shape) != 3:
                    raise ShapeChainError(f"{l.name}: conv on non-3d shape {shape}")
                c, h, w = shape
                if l.cin != c:
                    raise ShapeChainError(f"{l.name}: cin {l.cin} != incoming {c}")
                if l.k % 2 != 1 or l.pad != (l.k - 1) // 2:
                    raise ShapeChainError(f"{l.name}: need odd k and pad=(k-1)/2")
                shape = (l.cout, h, w)
            elif l.kind == "relu":
                pass
            elif l.kind == "maxpool":
                if len(shape) != 3:
                    raise ShapeChainError(f"{l.name}: pool on non-3d shape {shape}")
                c, h, w = shape
                shape = (c, (h + 1) // 2, (w + 1) // 2)
            elif l.kind == "flatten":
                n = 1
                for e in shape:
                    n *= e
                shape = (n,)
            elif l.kind == "linear":
                if shape != (l.in_features,):
                    raise ShapeChainError(f"{l.name}: in {l.in_features} != incoming {shape}")
                shape = (l.out_features,)
            else:
                raise ShapeChainError(f"{l.name}: unknown kind {l.kind!r}")
        if shape != (self.classes,):
            raise ShapeChainError(f"{self.name}: final shape {shape} != classes ({self.classes},)")

    def layer_index(self, name: str) -> int:
        for i, l in enumerate(self.layers):
            if l.name == name:
                return i
        raise KeyError(name)

    def pathway_channels(self) -> list[int]:
        """Channel count of each pathway layer, in pathway order."""
        out = []
        shape = tuple(self.input_shape)
        want = set(self.pathway_layers)
        for i, l in enumerate(self.layers):
            if l.kind == "conv":
                shape = (l.cout, shape[1], shape[2])
            elif l.kind == "maxpool":
                shape = (shape[0], (shape[1] + 1) // 2, (shape[2] + 1) // 2)
            elif l.kind == "flatten":
                shape = (shape[0] * shape[1] * shape[2],)
            elif l.kind == "linear":
                shape = (l.out_features,)
            if i in want:
                out.append(shape[0])
        return out

    def pathway_map_shapes(self) -> list[tuple[int, int]]:
        """(H,W) of each pathway layer's feature map, in pathway order."""
        out = []
        shape = tuple(self.input_shape)
        want = set(self.pathway_layers)
        for i, l in enumerate(self.layers):
            if l.kind == "conv":
                shape = (l.cout, shape[1], shape[2])
            elif l.kind == "maxpool":
                shape = (shape[0], (shape[1] + 1) // 2, (shape[2] + 1) // 2)
            if i in want:
                out.append((shape[1], shape[2]))
        return out

    def to_header_arch(self) -> list[dict]:
        return [{"name": l.name, "kind": l.kind, "params": l.params()} for l in self.layers]


def _conv(name, cin, cout, k=3):
    return LayerSpec(name, "conv", cout=cout, cin=cin, k=k, pad=(k - 1) // 2)


def _vgg_block(prefix: str, cin: int, cout: int, convs: int, pool_name: str) -> list[LayerSpec]:
    layers = []
    c = cin
    for i in range(1, convs + 1):
        layers.append(_conv(f"{prefix}_{i}", c, cout))
        layers.append(LayerSpec(f"{prefix}_{i}_relu", "relu"))
        c = cout
    layers.append(LayerSpec(pool_name, "maxpool"))
    return layers


def reference_vgg16(input_shape=(3, 32, 32), classes=10) -> ModelSpec:
    """VGG-16 feature stack for small inputs: 13 convs, 5 pools, small head.

    The 18 conv+pool layers are the pathway layers; their channel counts
    sum to 5696. A 32x32 input pools down 16/8/4/2/1, a 28x28 input
    14/7/4/2/1; both end at 512x1x1 before the classifier head.
    """
    layers: list[LayerSpec] = []
    layers += _vgg_block("conv1", input_shape[0], 64, 2, "maxpl1")
    layers += _vgg_block("conv2", 64, 128, 2, "maxpl2")
    layers += _vgg_block("conv3", 128, 256, 3, "maxpl3")
    layers += _vgg_block("conv4", 256, 512, 3, "maxpl4")
    layers += _vgg_block("conv5", 512, 512, 3, "maxpl5")
    h = input_shape[1]
    for _ in range(5):
        h = (h + 1) // 2
    w = input_shape[2]
    for _ in range(5):
        w = (w + 1) // 2
    feat = 512 * h * w
    layers.append(LayerSpec("flatten", "flatten"))
    layers.append(LayerSpec("fc1", "linear", out_features=256, in_features=feat))
    layers.append(LayerSpec("fc1_relu", "relu"))
    layers.append(LayerSpec("logits", "linear", out_features=classes, in_features=256))
    return ModelSpec("reference_vgg16", layers, tuple(input_shape), classes)


def tiny_conv(input_shape=(3, 32, 32), classes=10) -> ModelSpec:
    """4-conv fixture config; fast enough for test suites."""
    layers = [
        _conv("conv1", input_shape[0], 16), LayerSpec("conv1_relu", "relu"),
        LayerSpec("maxpl1", "maxpool"),
        _conv("conv2", 16, 32), LayerSpec("conv2_relu", "relu"),
        LayerSpec("maxpl2", "maxpool"),
        _conv("conv3", 32, 32), LayerSpec("conv3_relu", "relu"),
        LayerSpec("maxpl3", "maxpool"),
        _conv("conv4", 32, 64), LayerSpec("conv4_relu", "relu"),
        LayerSpec("maxpl4", "maxpool"),
    ]
    h, w = input_shape[1], input_shape[2]
    for _ in range(4):
        h, w = (h + 1) // 2, (w + 1) // 2
    layers.append(LayerSpec("flatten", "flatten"))
    layers.append(LayerSpec("logits", "linear", out_features=classes, in_features=64 * h * w))
    return ModelSpec("tiny_conv", layers, tuple(input_shape), classes)


def toy_net(input_shape=(1, 6, 6), classes=2) -> ModelSpec:
    """Two-conv toy used by the exhaustive-oracle tests."""
    layers = [
        _conv("conv1", input_shape[0], 2), LayerSpec("conv1_relu", "relu"),
        LayerSpec("maxpl1", "maxpool"),
        _conv("conv2", 2, 2), LayerSpec("conv2_relu", "relu"),
    ]
    h, w = (input_shape[1] + 1) // 2, (input_shape[2] + 1) // 2
    layers.append(LayerSpec("flatten", "flatten"))
    layers.append(LayerSpec("logits", "linear", out_features=classes, in_features=2 * h * w))
    return ModelSpec("toy_net", layers, tuple(input_shape), classes)


STOCK_ARCHS = {
    "reference_vgg16": reference_vgg16,
    "tiny_conv": tiny_conv,
    "toy_net": toy_net,
}
