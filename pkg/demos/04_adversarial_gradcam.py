"""Craft sign-gradient adversarials, compare pathway fingerprints, Grad-CAM.

Builds attack groups: for each correctly classified image, a perturbed
copy that flips the prediction (epsilon doubles until the flip lands or
the budget runs out) plus a clean image of the class the attack landed
on. The study then measures whether the adversarial's pathway
fingerprint sits closer to its origin or to its adopted class, and
Grad-CAM shows where the flipped class looks.

Run:  python3 demos/04_adversarial_gradcam.py
"""
import pathlib

import numpy as np

from diffpath.arch import tiny_conv
from diffpath.attacks import AttackConfig, build_adversarial_groups, grad_cam
from diffpath.imageio import write_pnm
from diffpath.studies import adversarial_study

from _util import seeded_weights, self_labeled

OUT = pathlib.Path(__file__).parent / "_out" / "04_adversarial_gradcam"
OUT.mkdir(parents=True, exist_ok=True)

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
images = np.random.default_rng(43).integers(0, 256, (24, 1, 16, 16), np.uint8)
dataset, pre = self_labeled(model, weights, images)

config = AttackConfig(epsilon=0.05)
groups, partial = build_adversarial_groups(model, weights, dataset, count=3,
                                           config=config, seed=5, preproc=pre)
print(f"built {len(groups)} attack groups (partial={partial})")
for g in groups:
    print(f"  image of class {g.label}: flipped to {g.adversarial_prediction} "
          f"at epsilon {g.epsilon_used:g} "
          f"(escalated x{round(g.epsilon_used / config.epsilon)})")

report = adversarial_study(model, weights, dataset, pre, count=3,
                           config=config, seed=5)
print("\nfingerprint distances per group (original vs adversarial vs target):")
for row in report["rows"]:
    print("  group {}: orig-adv {:.2f}  orig-target {:.2f}  adv-target {:.2f}"
          .format(row[0], *map(float, row[1:])))
med = report["medians"]
print("medians: " + "  ".join(f"{k}={float(v):.2f}" for k, v in sorted(med.items())))

if groups:
    g = groups[0]
    cam = grad_cam(model, weights, g.adversarial, class_index=g.adversarial_prediction)
    write_pnm(cam, OUT / "gradcam_adversarial.pgm")
    print(f"\nwrote {OUT / 'gradcam_adversarial.pgm'} "
          f"(class {g.adversarial_prediction} heat, shape {cam.shape})")
