"""Shared setup for the demo scripts: seeded weights and self-labeled data.

The demos run on randomly initialized classifiers, so ground-truth labels
would be meaningless; instead each batch is labeled with the model's own
predictions. That gives every downstream step (attacks, transforms,
group studies) a consistent notion of "correctly classified".
"""
import numpy as np

from diffpath.datasets import LabeledDataset, Preprocessing
from diffpath.runtime import forward_trace


def seeded_weights(model, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    weights = {}
    for l in model.layers:
        if l.kind == "conv":
            weights[f"{l.name}/weight"] = rng.normal(
                0, scale, (l.cout, l.cin, l.k, l.k)).astype(np.float32)
            weights[f"{l.name}/bias"] = rng.normal(0, 0.1, l.cout).astype(np.float32)
        elif l.kind == "linear":
            weights[f"{l.name}/weight"] = rng.normal(
                0, scale, (l.out_features, l.in_features)).astype(np.float32)
            weights[f"{l.name}/bias"] = rng.normal(0, 0.1, l.out_features).astype(np.float32)
    return weights


def self_labeled(model, weights, images, classes=10, split="demo"):
    pre = Preprocessing()
    labels = np.array([forward_trace(model, weights, pre.apply(im)).predicted
                       for im in images], dtype=np.int64)
    return LabeledDataset(images, labels, classes=classes, split=split), pre
