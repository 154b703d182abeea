"""Embedding quality: neighbourhood preservation, 1-NN accuracy, curvature spread."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core_geometry import PointCloud, knn_search, local_frames
from .errors import InvalidDataError, InvalidParameterError
from .patch_model import curvature, fit_patches


@dataclass(frozen=True)
class NprResult:
    value: float
    K: int
    per_point: np.ndarray


@dataclass(frozen=True)
class ClassificationResult:
    accuracy: float
    n_train: int
    n_test: int
    seed: int
    per_class: dict
    train_index: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class CurvatureHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    per_point_scalars: np.ndarray


def _coords(Z) -> np.ndarray:
    if hasattr(Z, "coords"):
        return np.asarray(Z.coords, dtype=float)
    if isinstance(Z, PointCloud):
        return Z.data
    return np.atleast_2d(np.asarray(Z, dtype=float))


def npr(X, Z, K: int = 10) -> NprResult:
    """Mean fraction of each point's K nearest neighbours kept by the embedding.

    Neighbours exclude the point itself and ties break by index.
    """
    Xd, Zd = _coords(X), _coords(Z)
    if Xd.shape[0] != Zd.shape[0]:
        raise InvalidDataError(f"size mismatch: {Xd.shape[0]} input points vs {Zd.shape[0]} embedded")
    a = knn_search(PointCloud(Xd), K).indices
    b = knn_search(PointCloud(Zd), K).indices
    both = np.concatenate([a, b], axis=1)
    both.sort(axis=1)
    shared = np.sum(both[:, 1:] == both[:, :-1], axis=1)
    per_point = shared / K
    return NprResult(value=float(per_point.mean()), K=K, per_point=per_point)


def stratified_split(labels: np.ndarray, seed: int) -> np.ndarray:
    """Boolean train mask: half of every class, the odd one out goes to training."""
    labels = np.asarray(labels)
    rng = np.random.Generator(np.random.Philox(seed))
    train = np.zeros(labels.shape[0], dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise InvalidDataError(f"class {c} has a single member; it cannot be split")
        perm = rng.permutation(idx)
        train[perm[: (idx.size + 1) // 2]] = True
    return train


def nn_classify(Z, labels, split_seed: int = 0) -> ClassificationResult:
    """1-NN accuracy in embedding space under a stratified half/half split."""
    coords = _coords(Z)
    labels = np.asarray(labels)
    if labels.shape[0] != coords.shape[0]:
        raise InvalidDataError("labels and embedding differ in length")
    train = stratified_split(labels, split_seed)
    test = ~train
    tree = cKDTree(coords[train])
    train_idx = np.flatnonzero(train)
    # exact distances with index tie-break among the returned candidates
    k = min(4, train_idx.size)
    _, cand = tree.query(coords[test], k=k)
    cand = np.asarray(cand).reshape(-1, k)
    dist = np.linalg.norm(coords[train_idx[cand]] - coords[test][:, None, :], axis=2)
    order = np.lexsort((cand, dist), axis=1)
    nearest = np.take_along_axis(cand, order[:, :1], axis=1)[:, 0]
    pred = labels[train_idx[nearest]]
    truth = labels[test]
    correct = pred == truth
    per_class = {int(c): float(correct[truth == c].mean()) for c in np.unique(truth)}
    return ClassificationResult(
        accuracy=float(correct.mean()) if correct.size else 0.0,
        n_train=int(train.sum()),
        n_test=int(test.sum()),
        seed=int(split_seed),
        per_class=per_class,
        train_index=train_idx,
    )


def patch_scalars(cloud, K: int = 10, d: Optional[int] = None, elliptic: bool = True) -> np.ndarray:
    """Scalar Ricci curvature at every point from its fitted chart."""
    from .core_geometry import estimate_dimension

    cloud = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    g = knn_search(cloud, K)
    if d is None:
        d = estimate_dimension(cloud, g).chosen_d
    d = min(max(d, 1), cloud.dim - 1)
    patches, _ = fit_patches(cloud, g, local_frames(cloud, g, d), elliptic=elliptic)
    return np.array([curvature(p).scalar for p in patches])


def curvature_histogram(cloud, K: int = 10, bins: int = 20, d: Optional[int] = None,
                        elliptic: bool = True) -> CurvatureHistogram:
    """Equal-width histogram of per-point scalar curvature over [min, max]."""
    if bins < 1:
        raise InvalidParameterError("bins must be >= 1")
    s = patch_scalars(cloud, K, d, elliptic)
    lo, hi = float(s.min()), float(s.max())
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
    return CurvatureHistogram(bin_edges=edges, counts=counts, per_point_scalars=s)


def npr_vs_k_sweep(X, methods: Sequence[str], k_values: Sequence[int], d: int = 2, **kwargs) -> list:
    """Long-format table of ``{"method", "K", "npr"}`` rows, methods outermost."""
    from .embedders import embed

    cloud = X if isinstance(X, PointCloud) else PointCloud(X)
    for K in k_values:
        if not 1 <= K < cloud.n:
            raise InvalidParameterError(f"K={K} must satisfy 1 <= K < N")
    rows = []
    for m in methods:
        for K in k_values:
            res = embed(cloud, m, d, K, **kwargs)
            rows.append({"method": m, "K": int(K), "npr": npr(cloud, res, K).value})
    return rows
