"""Drive the installed `diffpath` command end to end from a shell.

Writes a model file and a self-labeled dataset, then walks the whole
command set: classify one image, extract its pathways, collect
portion-hot rows for a few images, turn them into distances, centers
and an F test, run the three perturbation studies, and finish with
Grad-CAM, a ranking-overlap report and composite-digit generation.
Every command leaves a run.json behind so the directory documents
itself.

Run:  python3 demos/07_cli_walkthrough.py
"""
import json
import pathlib
import subprocess
import sys

import numpy as np

from diffpath.arch import tiny_conv
from diffpath.datasets import write_idx_images, write_idx_labels, write_manifest
from diffpath.dpwn import write_model

from _util import seeded_weights, self_labeled

OUT = pathlib.Path(__file__).parent / "_out" / "07_cli_walkthrough"
OUT.mkdir(parents=True, exist_ok=True)

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
images = np.random.default_rng(33).integers(0, 256, (24, 16, 16), np.uint8)
dataset, _ = self_labeled(model, weights, images[:, None])

write_model(OUT / "model.dpwn", model, weights)
write_idx_images(OUT / "images.idx", images)
write_idx_labels(OUT / "labels.idx", dataset.labels.astype(np.uint8))
write_manifest(OUT / "data.json", "idx", classes=10, split="demo",
               images="images.idx", labels="labels.idx")

MODEL = ["--model", str(OUT / "model.dpwn"), "--dataset", str(OUT / "data.json")]


def run(*args):
    cmd = ["diffpath"] + [str(a) for a in args]
    print("$ " + " ".join(cmd[:1] + [pathlib.Path(c).name if "/" in c else c
                                     for c in cmd[1:]]))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        raise SystemExit(f"command failed ({proc.returncode})")
    if proc.stdout.strip():
        print("  " + proc.stdout.strip().replace("\n", "\n  "))
    return proc


run("classify", *MODEL, "--index", 2)

run("pathways", *MODEL, "--index", 2, "--out", OUT / "pw")
print(f"  -> {sorted(p.name for p in (OUT / 'pw').iterdir())}\n")

run("portion-hot", *MODEL, "--indices", "0,1,2,3,4,5", "--out", OUT / "ph")
matrix = OUT / "ph" / "portion_hot_matrix.csv"
run("distances", "--matrix", matrix, "--out", OUT / "dist")
run("centers", "--matrix", matrix, "--out", OUT / "ctr")
run("anova", "--matrix", matrix, "--out", OUT / "f")
print("  anova.json: " + (OUT / "f" / "anova.json").read_text().strip()
      .replace("\n", " ") + "\n")

run("study-adversarial", *MODEL, "--count", 2, "--seed", 5, "--eps", 0.05,
    "--out", OUT / "s_adv")
run("study-rotate", *MODEL, "--count", 2, "--seed", 6, "--out", OUT / "s_rot")
run("study-occlude", *MODEL, "--count", 2, "--seed", 7, "--out", OUT / "s_occ")
for name in ("s_adv", "s_rot", "s_occ"):
    manifest = json.loads((OUT / name / "manifest.json").read_text())
    print(f"  {name}: kind={manifest['kind']} groups={manifest['group_count']}")
print()

run("gradcam", *MODEL, "--index", 1, "--layer", "conv3", "--out", OUT / "cam")
run("overlap", *MODEL, "--count", 3, "--out", OUT / "ov")
print("  overlap.json: " + (OUT / "ov" / "overlap.json").read_text().strip()
      .replace("\n", " ")[:200] + "...\n")

run("m2nist", "--dataset", OUT / "data.json", "--count", 6, "--seed", 2,
    "--canvas", "32x40", "--out", OUT / "m2")
print(f"\nall outputs under {OUT}")
