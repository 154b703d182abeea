"""Neighborhood preservation across methods and datasets.

NPR is the mean fraction of each point's K nearest neighbors that are still
among its K nearest neighbors after embedding into two dimensions. The flat
Swiss roll takes the short path (no flow, plain Isomap), while the three
curved surfaces go through flow, alignment onto a sphere, and spherical PCA.

Run: python demos/03_compare_methods.py   (about a minute)
"""
from rfml import DatasetSpec, embed, generate, npr

METHODS = ("pca", "isomap", "lle", "lep", "ltsa", "rfml")
K = 10

print(f"{'':>11}" + "".join(f"{m:>8}" for m in METHODS))
for kind in ("swiss_roll", "sphere", "ellipsoid", "gaussian"):
    cloud = generate(DatasetSpec(kind, 1000, seed=0))
    row = [npr(cloud, embed(cloud, m, 2, K), K).value for m in METHODS]
    print(f"{kind:>11}" + "".join(f"{v:8.4f}" for v in row))

# rfml reports what its pipeline did along with the coordinates.
cloud = generate(DatasetSpec("ellipsoid", 1000, seed=0))
res = embed(cloud, "rfml", 2, K)
d = res.diagnostics
print(f"\nellipsoid: C = {d['C']:.4f}, sphere radius {d['radius']:.3f}, final reducer {d['final_method']}, "
      f"converged {d['converged_fraction']:.1%}")

# Stability in K: rfml's NPR barely moves as the neighborhood grows.
for m in ("rfml", "isomap", "lle"):
    vals = [npr(cloud, embed(cloud, m, 2, k), k).value for k in (8, 12, 16)]
    print(f"{m:>7} NPR at K = 8, 12, 16: " + ", ".join(f"{v:.4f}" for v in vals))
