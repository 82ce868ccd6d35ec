"""Rotation and occlusion sweeps: when does the prediction break?

For each correctly classified image, sweep a transform until the
prediction flips: rotations walk 10-degree steps, occlusions slide a
gray square across the image. Each group keeps the strongest transform
that did NOT flip the prediction (invariant) and the first one that did
(variant), plus a clean image of the adopted class. Fingerprint
distances then show how far the variant drifted in pathway space.

Run:  python3 demos/05_rotate_occlude.py
"""
import numpy as np

from diffpath.arch import tiny_conv
from diffpath.transforms import build_transform_groups
from diffpath.studies import transform_study

from _util import seeded_weights, self_labeled

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
images = np.random.default_rng(44).integers(0, 256, (24, 1, 16, 16), np.uint8)
dataset, pre = self_labeled(model, weights, images)

for kind, seed in (("rotate", 6), ("occlude", 7)):
    groups, partial = build_transform_groups(model, weights, dataset, kind,
                                             count=3, seed=seed, preproc=pre)
    print(f"{kind}: {len(groups)} groups (partial={partial})")
    for g in groups:
        print(f"  class {g.label} -> {g.variant_prediction}  "
              f"survives {g.invariant_desc}  breaks at {g.variant_desc}")

    report = transform_study(model, weights, dataset, pre, kind,
                             count=3, seed=seed)
    if report["rows"]:
        head = report["columns"][1:]
        meds = [f"{h}={float(report['medians'][h]):.2f}" for h in head
                if report["medians"][h] is not None]
        print("  median distances: " + "  ".join(meds))
    print()
