"""Classify an image, then pull its per-pixel diffusion pathways apart.

Builds a small convolutional classifier with seeded random weights,
labels a synthetic image batch with the model's own predictions, and
extracts the pathway aggregates for one image: per input pixel, how
strongly that pixel's diffusion field crosses every channel of every
conv/pool layer. Saves the aggregates to a .dpwn container, loads them
back, and renders the combined saliency map as a PGM.

Run:  python3 demos/01_classify_and_extract.py
"""
import pathlib

import numpy as np

from diffpath.arch import tiny_conv
from diffpath.datasets import Preprocessing
from diffpath.pathways import extract_pathways, load_result, save_result
from diffpath.analysis import saliency_map
from diffpath.imageio import write_pnm
from diffpath.runtime import forward_trace

from _util import seeded_weights

OUT = pathlib.Path(__file__).parent / "_out" / "01_classify_and_extract"
OUT.mkdir(parents=True, exist_ok=True)

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
pre = Preprocessing()

rng = np.random.default_rng(33)
images = rng.integers(0, 256, (8, 16, 16), dtype=np.uint8)

print("classifying the batch:")
for i, raw in enumerate(images):
    trace = forward_trace(model, weights, pre.apply(raw[None]))
    print(f"  image {i}: class {trace.predicted}  "
          f"top logit {trace.logits[trace.predicted]:+.3f}")

image = pre.apply(images[2][None])
result = extract_pathways(model, weights, image)

print("\npathway aggregates for image 2, one row per conv/pool layer:")
print(f"  {'layer':10s} {'shape':14s} {'total':>12s} {'peak':>12s}")
for agg in result.aggregates:
    total = float(agg.values.sum())
    peak = float(agg.values.max())
    print(f"  {agg.name:10s} {str(agg.values.shape):14s} {total:12.4g} {peak:12.4g}")

save_result(result, OUT / "aggregates.dpwn")
back = load_result(OUT / "aggregates.dpwn")
assert all((a.values == b.values).all()
           for a, b in zip(result.aggregates, back.aggregates))
print(f"\nsaved and reloaded {OUT / 'aggregates.dpwn'} byte-faithfully")

heat, norm = saliency_map(result)
write_pnm(norm, OUT / "saliency.pgm")
py, px = np.unravel_index(heat.argmax(), heat.shape)
print(f"wrote {OUT / 'saliency.pgm'} (max intensity at pixel ({int(py)}, {int(px)}))")
