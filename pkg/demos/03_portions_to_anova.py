"""Portion-hot fingerprints for a batch, then distances, centers, ANOVA.

Extracts the portion-hot vector for each image in a batch, groups the
vectors by predicted class, and asks whether the groups differ more
between classes than within them: pairwise L2 distances, per-class
center vectors, and a one-way F test on a scalar projection.

Run:  python3 demos/03_portions_to_anova.py
"""
import numpy as np

from diffpath.arch import tiny_conv
from diffpath.pathways import extract_pathways
from diffpath.analysis import (anova_oneway, category_centers, l2_distance,
                               portion_hot, scalarize)

from _util import seeded_weights, self_labeled

model = tiny_conv(input_shape=(1, 16, 16), classes=10)
weights = seeded_weights(model, seed=31)
images = np.random.default_rng(42).integers(0, 256, (18, 1, 16, 16), np.uint8)
dataset, pre = self_labeled(model, weights, images)

vectors = []
for i in range(len(dataset)):
    result = extract_pathways(model, weights, pre.apply(dataset.images[i]))
    vectors.append(portion_hot(result, k=3))
print(f"extracted {len(vectors)} portion-hot vectors "
      f"of length {len(vectors[0].values)}")

print("\npairwise L2 distances (first 5 images):")
for i in range(5):
    row = " ".join(f"{l2_distance(vectors[i], vectors[j]):6.2f}" for j in range(5))
    print(f"  img {i}: {row}")

labels = dataset.labels
arrays = [v.values for v in vectors]
centers, overall = category_centers(arrays, labels)
print(f"\nper-class centers: {len(centers)} classes present out of 10")
for cls, center in sorted(centers.items()):
    n = int((labels == cls).sum())
    print(f"  class {cls}: {n} images, center-to-overall distance "
          f"{np.linalg.norm(center - overall):.3f}")

# one scalar per image -> classic one-way layout
scalars = scalarize(arrays)
groups = [scalars[labels == cls].tolist() for cls in sorted(centers)]
groups = [g for g in groups if len(g) >= 2]
if len(groups) >= 2:
    report = anova_oneway(groups)
    print(f"\none-way F test over {len(groups)} classes: "
          f"F={report.f_stat:.3f} df=({report.df_between},{report.df_within}) "
          f"critical={report.critical:.3f} significant={report.significant}")
else:
    print("\nnot enough classes with 2+ members for a variance test; "
          "rerun with a bigger batch")
