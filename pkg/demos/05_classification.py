"""Embedding, then nearest-neighbor classification.

Labeled data is split per class into halves (the extra point of an odd class
goes to training), embedded, and classified with 1-NN in the embedding. Here
the labels are three bands of the ellipsoid's height; a real run would load
a vectorized image CSV with `load_csv(path, label_column="label")`.

Run: python demos/05_classification.py
"""
import numpy as np

from rfml import DatasetSpec, PointCloud, embed, generate, nn_classify

base = generate(DatasetSpec("ellipsoid", 900, seed=0)).data
labels = np.digitize(base[:, 2], [-0.15, 0.15])  # three height bands
cloud = PointCloud(base, labels)

for m in ("pca", "isomap", "lep", "ltsa", "rfml"):
    res = nn_classify(embed(cloud, m, 2, 10), cloud.labels, split_seed=0)
    per = ", ".join(f"{k}: {v:.2f}" for k, v in sorted(res.per_class.items()))
    print(f"{m:>7}: accuracy {res.accuracy:.4f} ({res.n_train} train / {res.n_test} test; per class {per})")

# Chance level as a reference: random labels over 10 classes give about 0.1.
rng = np.random.default_rng(0)
print(f"\nrandom labels: {nn_classify(rng.normal(size=(700, 5)), rng.integers(0, 10, 700), 0).accuracy:.3f}")
