"""Intrinsic dimension and curvature diagnostics.

The local dimension of each patch is the number of principal components
needed to reach 95% of its variance; the manifold dimension is the maximum.
The curvature histogram shows how uneven the data's curvature is, which is
what motivates flowing it before reduction.

Run: python demos/04_diagnostics.py
"""
import numpy as np

from rfml import DatasetSpec, curvature_histogram, estimate_dimension, generate, knn_search

for kind in ("swiss_roll", "sphere", "plane"):
    cloud = generate(DatasetSpec(kind, 1000, seed=0))
    rep = estimate_dimension(cloud, knn_search(cloud, 10), ratio=0.95)
    print(f"{kind:>10}: dimension histogram {dict(sorted(rep.histogram.items()))}, chosen d = {rep.chosen_d}")

# Points at the edge of the roll see a lopsided neighborhood, so an
# occasional one looks one-dimensional at the 0.95 cut.
cloud = generate(DatasetSpec("swiss_roll", 1000, seed=0))
rep = estimate_dimension(cloud, knn_search(cloud, 10))
odd = [i for i, d in enumerate(rep.per_point_dims) if d != 2]
print(f"swiss roll points not at dimension 2: {odd}, heights {np.round(cloud.data[odd, 1], 2).tolist()} of [0, 21]")

print()
for kind in ("gaussian", "ellipsoid"):
    h = curvature_histogram(generate(DatasetSpec(kind, 1000, seed=0)), K=10, bins=12)
    peak = h.counts.max()
    print(f"{kind} scalar curvature histogram")
    for lo, hi, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
        print(f"  [{lo:7.3f}, {hi:7.3f})  {'#' * int(round(40 * c / peak)):<40} {c}")
