"""Forward tracing and channel-importance ranking.

A ForwardTrace stores, per layer, everything the pathway engine's masks
and the backward rules need: activations, ReLU masks, pool argmax maps,
logits and the predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_ops as T
from .arch import ModelSpec
from .errors import ShapeError, TraceError

__all__ = ["LayerRecord", "ForwardTrace", "forward_trace",
           "backward_from_logits", "channel_scores", "channel_importance"]

IMPORTANCE_METHODS = ("activation-l1", "grad-x-activation")


@dataclass
class LayerRecord:
    name: str
    kind: str
    output: np.ndarray
    input_shape: tuple
    mask: np.ndarray | None = None      # relu layers
    argmax: np.ndarray | None = None    # maxpool layers


@dataclass
class ForwardTrace:
    records: list[LayerRecord] = field(default_factory=list)
    logits: np.ndarray | None = None
    predicted: int = -1


def forward_trace(model: ModelSpec, weights: dict, image: np.ndarray) -> ForwardTrace:
    """Run the model on one image, recording every layer's outputs."""
    image = np.asarray(image, dtype=np.float32)
    if image.shape != tuple(model.input_shape):
        raise ShapeError(f"image shape {image.shape} != model input {model.input_shape}")
    trace = ForwardTrace()
    x = image
    for l in model.layers:
        in_shape = x.shape
        if l.kind == "conv":
            x = T.conv2d_forward(x, weights[f"{l.name}/weight"],
                                 weights[f"{l.name}/bias"], pad=l.pad)
            trace.records.append(LayerRecord(l.name, "conv", x, in_shape))
        elif l.kind == "relu":
            x, mask = T.relu_forward(x)
            trace.records.append(LayerRecord(l.name, "relu", x, in_shape, mask=mask))
        elif l.kind == "maxpool":
            x, argmax = T.maxpool2x2_forward(x)
            trace.records.append(LayerRecord(l.name, "maxpool", x, in_shape, argmax=argmax))
        elif l.kind == "flatten":
            x = x.reshape(-1)
            trace.records.append(LayerRecord(l.name, "flatten", x, in_shape))
        elif l.kind == "linear":
            x = T.linear_forward(x, weights[f"{l.name}/weight"], weights[f"{l.name}/bias"])
            trace.records.append(LayerRecord(l.name, "linear", x, in_shape))
        else:
            raise ShapeError(f"unknown layer kind {l.kind!r}")
    trace.logits = x
    trace.predicted = int(np.argmax(x))  # lowest index wins ties
    return trace


def backward_from_logits(model: ModelSpec, weights: dict, trace: ForwardTrace,
                         grad_logits: np.ndarray, stop_layer: int = -1) -> np.ndarray:
    """Propagate a logits gradient back to the output of stop_layer.

    stop_layer=-1 walks all the way to the input image. Returns the
    gradient with respect to the output of layers[stop_layer].
    """
    g = np.asarray(grad_logits, dtype=np.float32)
    for i in range(len(model.layers) - 1, stop_layer, -1):
        l, rec = model.layers[i], trace.records[i]
        if rec.kind != l.kind:
            raise TraceError(f"record {i} kind {rec.kind} != layer kind {l.kind}")
        if l.kind == "conv":
            g = T.layer_input_gradient("conv", g, weight=weights[f"{l.name}/weight"], pad=l.pad)
        elif l.kind == "relu":
            g = T.layer_input_gradient("relu", g, mask=rec.mask)
        elif l.kind == "maxpool":
            g = T.layer_input_gradient("maxpool", g, argmax=rec.argmax,
                                       input_shape=rec.input_shape)
        elif l.kind == "flatten":
            g = T.layer_input_gradient("flatten", g, input_shape=rec.input_shape)
        elif l.kind == "linear":
            g = T.layer_input_gradient("linear", g, weight=weights[f"{l.name}/weight"])
    return g


def _resolve_pathway_layer(model: ModelSpec, layer) -> int:
    idx = model.layer_index(layer) if isinstance(layer, str) else int(layer)
    if idx not in model.pathway_layers:
        raise TraceError(f"layer {layer!r} is not a pathway layer")
    return idx


def _post_activation(model: ModelSpec, trace: ForwardTrace, idx: int) -> np.ndarray:
    # conv layers score on the following relu's output; pools on their own
    if model.layers[idx].kind == "conv" and idx + 1 < len(model.layers) \
            and model.layers[idx + 1].kind == "relu":
        return trace.records[idx + 1].output
    return trace.records[idx].output


def channel_scores(model: ModelSpec, weights: dict, trace: ForwardTrace, layer,
                   method: str = "activation-l1", class_index: int | None = None) -> np.ndarray:
    """Per-channel importance scores at a pathway layer (float64)."""
    idx = _resolve_pathway_layer(model, layer)
    act = _post_activation(model, trace, idx)
    if method == "activation-l1":
        return np.abs(act.astype(np.float64)).sum(axis=(1, 2))
    if method == "grad-x-activation":
        if class_index is None:
            class_index = trace.predicted
        onehot = np.zeros(model.classes, dtype=np.float32)
        onehot[int(class_index)] = 1.0
        stop = idx + 1 if (model.layers[idx].kind == "conv"
                           and model.layers[idx + 1].kind == "relu") else idx
        grad = backward_from_logits(model, weights, trace, onehot, stop_layer=stop)
        scores = (grad.astype(np.float64) * act.astype(np.float64)).sum(axis=(1, 2))
        return np.maximum(scores, 0.0)
    raise ValueError(f"unknown importance method {method!r}")


def channel_importance(model: ModelSpec, weights: dict, trace: ForwardTrace, layer,
                       method: str = "activation-l1",
                       class_index: int | None = None) -> np.ndarray:
    """Channel indices sorted by descending score; ties keep lower index."""
    scores = channel_scores(model, weights, trace, layer, method, class_index)
    return np.argsort(-scores, kind="stable").astype(np.int32)
