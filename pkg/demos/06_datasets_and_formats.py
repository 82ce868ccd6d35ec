"""Dataset plumbing: composite digits, IDX/CIFAR round trips, manifests.

Generates multi-digit composites on a blank canvas from a source digit
set (each canvas holds 1-3 digits at non-overlapping positions, labels
are multi-hot), round-trips them through the IDX container, round-trips
a batch through the CIFAR binary record format, and shows the manifest
file that ties images, labels and preprocessing together for the CLI.

Run:  python3 demos/06_datasets_and_formats.py
"""
import json
import pathlib

import numpy as np

from diffpath.datasets import (LabeledDataset, Preprocessing, gen_m2nist,
                               load_cifar10_bin, load_idx_multilabel,
                               load_manifest, write_cifar10_bin,
                               write_idx_images, write_idx_multilabel,
                               write_manifest)
from diffpath.imageio import write_pnm

OUT = pathlib.Path(__file__).parent / "_out" / "06_datasets_and_formats"
OUT.mkdir(parents=True, exist_ok=True)

# blob-per-class images standing in for handwritten digits
rng = np.random.default_rng(9)
digits = np.zeros((40, 1, 28, 28), dtype=np.uint8)
for i in range(40):
    y, x = rng.integers(4, 20, 2)
    h, w = rng.integers(4, 9, 2)
    digits[i, 0, y:y + h, x:x + w] = rng.integers(128, 256)
source = LabeledDataset(digits, (np.arange(40) % 10).astype(np.int64),
                        classes=10, split="demo")

composites = gen_m2nist(source, count=12, seed=4, canvas=(64, 84))
print(f"composites: images {composites.images.shape}, "
      f"multi-hot labels {composites.labels.shape}")
for i in range(4):
    present = np.flatnonzero(composites.labels[i]).tolist()
    print(f"  canvas {i}: digits {present}")
write_pnm(composites.images[0, 0] / 255.0, OUT / "composite0.pgm")

write_idx_images(OUT / "images.idx", composites.images[:, 0])
write_idx_multilabel(OUT / "labels.idx", composites.labels)
back = load_idx_multilabel(OUT / "images.idx", OUT / "labels.idx")
assert (back.images[:, 0] == composites.images[:, 0]).all()
assert (back.labels == composites.labels).all()
print(f"IDX round trip ok: {OUT / 'images.idx'}")

rgb = np.random.default_rng(10).integers(0, 256, (5, 3, 32, 32), np.uint8)
rgb_labels = np.array([0, 3, 3, 7, 9], np.uint8)
write_cifar10_bin(OUT / "batch.bin", rgb, rgb_labels)
ds = load_cifar10_bin([OUT / "batch.bin"])
assert (ds.images == rgb).all() and (ds.labels == rgb_labels).all()
print(f"CIFAR binary round trip ok: {OUT / 'batch.bin'} "
      f"({(OUT / 'batch.bin').stat().st_size} bytes = 5 x 3073)")

write_manifest(OUT / "data.json", "cifar10-bin", classes=10, split="demo",
               files=["batch.bin"], mean=[0.5] * 3, std=[0.25] * 3)
dataset, pre = load_manifest(OUT / "data.json")
x = pre.apply(dataset.images[1])
print(f"\nmanifest {OUT / 'data.json'}:")
print("  " + json.dumps(json.loads((OUT / 'data.json').read_text())))
print(f"  preprocessed image 1: dtype {x.dtype}, range "
      f"[{x.min():.2f}, {x.max():.2f}] after (u8/255 - 0.5) / 0.25")
restored = pre.invert(x)
assert (restored == rgb[1]).all()
print("  invert() recovers the original bytes exactly")
