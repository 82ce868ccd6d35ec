"""FGSM adversarial generation, triple-group construction, Grad-CAM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .datasets import LabeledDataset, Preprocessing
from .errors import LayerNotFoundError, ShapeError
from .imageio import bilinear_resize
from .runtime import backward_from_logits, forward_trace

__all__ = ["AttackConfig", "AdversarialGroup", "input_gradient", "fgsm",
           "build_adversarial_groups", "grad_cam", "cam_channel_weights"]


@dataclass
class AttackConfig:
    epsilon: float = 0.03          # perturbation in preprocessed-pixel units
    clip: tuple[float, float] = (0.0, 1.0)
    max_escalations: int = 4       # epsilon doublings tried when the label holds

    def __post_init__(self):
        if not (self.epsilon >= 0 and np.isfinite(self.epsilon)):
            raise ValueError("epsilon must be finite and >= 0")
        if not self.clip[0] < self.clip[1]:
            raise ValueError("clip range must satisfy lo < hi")


@dataclass
class AdversarialGroup:
    original_index: int
    original: np.ndarray           # preprocessed float32 [C,H,W]
    label: int
    adversarial: np.ndarray
    adversarial_prediction: int
    epsilon_used: float
    target_index: int
    target: np.ndarray
    target_label: int


def input_gradient(model, weights, image: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy loss at label w.r.t. the input image."""
    trace = forward_trace(model, weights, image)
    _, grad_logits = T.softmax_cross_entropy(trace.logits, label)
    return backward_from_logits(model, weights, trace, grad_logits, stop_layer=-1)


def fgsm(model, weights, image: np.ndarray, label: int,
         config: AttackConfig | None = None) -> np.ndarray:
    """adv = clip(image + epsilon * sign(grad loss), lo, hi); sign(0)=0."""
    config = config or AttackConfig()
    grad = input_gradient(model, weights, image, label)
    adv = np.asarray(image, dtype=np.float32) + np.float32(config.epsilon) * np.sign(grad)
    return np.clip(adv, np.float32(config.clip[0]), np.float32(config.clip[1]))


def build_adversarial_groups(model, weights, dataset: LabeledDataset, count: int,
                             config: AttackConfig | None = None, seed: int = 0,
                             preproc: Preprocessing | None = None
                             ) -> tuple[list[AdversarialGroup], bool]:
    """Assemble (original, adversarial, target) triples.

    Candidates are visited in a seeded random order; misclassified
    originals are skipped, epsilon doubles up to max_escalations when the
    prediction does not flip, and the target is drawn (seeded per
    candidate) from samples of the flipped class. Returns (groups,
    partial-output flag); the flag is set when the dataset runs out
    before count groups are found.
    """
    config = config or AttackConfig()
    preproc = preproc or Preprocessing()
    if count < 1:
        raise ValueError("count must be >= 1")
    labels = dataset.labels
    by_class = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    groups: list[AdversarialGroup] = []
    for idx in order:
        if len(groups) >= count:
            break
        idx = int(idx)
        image = preproc.apply(dataset.images[idx])
        label = int(labels[idx])
        if forward_trace(model, weights, image).predicted != label:
            continue
        adv = pred = None
        eps = config.epsilon
        for _ in range(config.max_escalations + 1):
            cand = fgsm(model, weights, image, label,
                        AttackConfig(eps, config.clip, config.max_escalations))
            p = forward_trace(model, weights, cand).predicted
            if p != label:
                adv, pred = cand, p
                break
            eps *= 2.0
        if adv is None:
            continue
        pool = by_class.get(pred)
        pool = pool[pool != idx] if pool is not None else np.array([], dtype=np.int64)
        if len(pool) == 0:
            continue
        sub_rng = np.random.default_rng([seed, idx])  # per-candidate stream
        tgt = int(pool[int(sub_rng.integers(0, len(pool)))])
        groups.append(AdversarialGroup(
            idx, image, label, adv, int(pred), float(eps),
            tgt, preproc.apply(dataset.images[tgt]), int(labels[tgt])))
    return groups, len(groups) < count


def _default_cam_layer(model) -> int:
    convs = [i for i in model.pathway_layers if model.layers[i].kind == "conv"]
    if not convs:
        raise LayerNotFoundError("model has no conv layer")
    for i in convs:
        if model.layers[i].name == "conv3_3":
            return i
    return convs[-1]


def grad_cam(model, weights, image: np.ndarray, class_index: int | None = None,
             layer=None) -> np.ndarray:
    """Grad-CAM heatmap at a conv layer, resized to the input and
    min-max normalized to [0,1].

    Channel weights are the spatial means of d(logit_class)/d(activation)
    at the layer; the map is ReLU(sum_c alpha_c * A_c).
    """
    trace = forward_trace(model, weights, image)
    if layer is None:
        idx = _default_cam_layer(model)
    else:
        idx = model.layer_index(layer) if isinstance(layer, str) else int(layer)
    if model.layers[idx].kind != "conv":
        raise LayerNotFoundError(f"grad_cam: layer {layer!r} is not a conv layer")
    if class_index is None:
        class_index = trace.predicted
    onehot = np.zeros(model.classes, dtype=np.float32)
    onehot[int(class_index)] = 1.0
    grad = backward_from_logits(model, weights, trace, onehot, stop_layer=idx)
    act = trace.records[idx].output
    alpha = grad.astype(np.float64).mean(axis=(1, 2))
    cam = np.maximum((alpha[:, None, None] * act.astype(np.float64)).sum(axis=0), 0.0)
    cam = bilinear_resize(cam, (model.input_shape[1], model.input_shape[2]))
    lo, hi = float(cam.min()), float(cam.max())
    return ((cam - lo) / (hi - lo)).astype(np.float32) if hi > lo else np.zeros_like(cam)


def cam_channel_weights(model, weights, image: np.ndarray, class_index: int,
                        layer) -> np.ndarray:
    """The alpha_c vector grad_cam uses; exposed for verification."""
    trace = forward_trace(model, weights, image)
    idx = model.layer_index(layer) if isinstance(layer, str) else int(layer)
    onehot = np.zeros(model.classes, dtype=np.float32)
    onehot[int(class_index)] = 1.0
    grad = backward_from_logits(model, weights, trace, onehot, stop_layer=idx)
    return grad.astype(np.float64).mean(axis=(1, 2))
