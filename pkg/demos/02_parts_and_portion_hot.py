"""Partition the image by dominant channels and build the portion-hot vector.

For one layer of pathway aggregates, each input pixel gets assigned to
the k channels its diffusion field crosses most strongly. The per-channel
share of image area ("part area ratio") summarizes which channels own
which fraction of the input. Concatenating those ratios over every
conv/pool layer yields the portion-hot vector, the fixed-length
fingerprint used by all the distance and variance analyses downstream.

Run:  python3 demos/02_parts_and_portion_hot.py
"""
import pathlib

import numpy as np

from diffpath.arch import tiny_conv
from diffpath.datasets import Preprocessing
from diffpath.pathways import extract_pathways
from diffpath.analysis import parts_topk, portion_hot
from diffpath.imageio import write_pnm

from _util import seeded_weights

OUT = pathlib.Path(__file__).parent / "_out" / "02_parts_and_portion_hot"
OUT.mkdir(parents=True, exist_ok=True)

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
pre = Preprocessing()
image = pre.apply(np.random.default_rng(41).integers(
    0, 256, (1, 16, 16), dtype=np.uint8))

result = extract_pathways(model, weights, image)

print("top-3 part ownership per layer:")
for cursor, agg in enumerate(result.aggregates):
    assignment = parts_topk(agg, k=3)
    ratios = assignment.area_ratios
    top = np.argsort(ratios)[::-1][:3]
    desc = ", ".join(f"ch{int(c)}:{ratios[int(c)]:.2f}" for c in top)
    print(f"  {agg.name:10s} {desc}")
    # winner channel index as gray level for a quick visual
    winners = assignment.winners[:, :, 0].astype(np.float64)
    img = np.where(winners >= 0, (winners + 1) / len(ratios), 0.0)
    write_pnm(img, OUT / f"parts_{cursor:02d}_{agg.name}.pgm")

vec = portion_hot(result, k=3)
print(f"\nportion-hot vector: length {len(vec.values)} "
      f"(= total channels across {len(result.aggregates)} layers)")
print(f"  nonzero entries: {int(np.count_nonzero(vec.values))}")
print(f"  value range: [{vec.values.min():.3f}, {vec.values.max():.3f}]")

starts = np.cumsum([0] + [a.values.shape[2] for a in result.aggregates])
print("  per-layer slices:")
for agg, lo, hi in zip(result.aggregates, starts, starts[1:]):
    chunk = vec.values[lo:hi]
    print(f"    {agg.name:10s} [{lo:4d}:{hi:4d})  sum {chunk.sum():.2f}")
print(f"\nwrote part maps to {OUT}")
