"""Point clouds, exact kNN graphs, local PCA frames and local dimension.

Every patch U_i consists of the point itself plus its K nearest neighbours,
so frames and charts are always built from K+1 points with the center first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidDataError, InvalidParameterError


@dataclass(frozen=True)
class PointCloud:
    """N points in R^D, with optional integer labels."""

    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if isinstance(self.data, PointCloud):
            if self.labels is None:
                object.__setattr__(self, "labels", self.data.labels)
            object.__setattr__(self, "data", self.data.data)
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidDataError(f"point data must be a non-empty N x D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidDataError("point data contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (data.shape[0],):
                raise InvalidDataError("labels must have one entry per point")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Row i lists the K nearest neighbours of point i (self excluded)."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def patch(self, i: int) -> np.ndarray:
        """Global indices of U_i, center first."""
        return np.concatenate(([i], self.indices[i]))


@dataclass(frozen=True)
class LocalFrame:
    center: np.ndarray
    mean: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray
    spectrum: np.ndarray
    degenerate: bool = False

    @property
    def d(self) -> int:
        return self.tangent_basis.shape[1]

    @property
    def basis(self) -> np.ndarray:
        return np.hstack([self.tangent_basis, self.normal_basis])


@dataclass
class DimensionReport:
    per_point_dims: np.ndarray
    chosen_d: int
    histogram: dict
    ratio: float
    not_reducible: bool = False
    degenerate_points: list = field(default_factory=list)


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def _pairwise_rows(X: np.ndarray, rows: np.ndarray, cand: np.ndarray) -> np.ndarray:
    diff = X[cand] - X[rows][:, None, :]
    return np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))


def knn_search(cloud, K: int) -> NeighborhoodGraph:
    """Exact Euclidean K nearest neighbours.

    Ties are broken by ascending point index, so the output does not depend
    on the tree's traversal order.
    """
    cloud = _as_cloud(cloud)
    X = cloud.data
    N = cloud.n
    K = int(K)
    if K < 1 or K >= N:
        raise InvalidParameterError(f"K must satisfy 1 <= K < N (K={K}, N={N})")

    tree = cKDTree(X)
    indices = np.empty((N, K), dtype=np.int64)
    distances = np.empty((N, K))
    pending = np.arange(N)
    extra = 4
    while pending.size:
        k_query = min(N, K + 1 + extra)
        tree_d, cand = tree.query(X[pending], k=k_query)
        cand = np.asarray(cand).reshape(len(pending), k_query)
        tree_d = np.asarray(tree_d).reshape(len(pending), k_query)
        exact = _pairwise_rows(X, pending, cand)
        is_self = cand == pending[:, None]
        exact_sort = np.where(is_self, np.inf, exact)
        # lexsort: last key is primary
        order = np.lexsort((cand, exact_sort), axis=1)
        cand_sorted = np.take_along_axis(cand, order, axis=1)[:, :K]
        dist_sorted = np.take_along_axis(exact_sort, order, axis=1)[:, :K]
        # a row is complete when the K-th distance is strictly inside the queried ball
        complete = (k_query == N) | (dist_sorted[:, -1] < tree_d[:, -1] * (1 - 1e-12))
        indices[pending[complete]] = cand_sorted[complete]
        distances[pending[complete]] = dist_sorted[complete]
        pending = pending[~complete]
        extra *= 4
    return NeighborhoodGraph(indices=indices, distances=distances)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _complete_basis(Q: np.ndarray, D: int) -> np.ndarray:
    """Extend orthonormal columns Q to an orthonormal basis of R^D.

    The complement comes from the Householder QR of Q itself, which costs
    O(D^2 r) and never forms a D x D product. Each added column is sign-fixed.
    """
    r = Q.shape[1]
    if r == D:
        return Q
    Qf = np.linalg.qr(Q, mode="complete")[0]
    return np.hstack([Q, _fix_signs(Qf[:, r:])])


def patch_spectrum(points: np.ndarray):
    """Descending eigenvalues/eigenvectors of the patch scatter matrix."""
    mean = points.mean(axis=0)
    centered = points - mean
    m, D = centered.shape
    if m < D:
        # at most m nonzero eigenvalues; the rest of the basis is filled in by the caller
        _, sv, Vt = np.linalg.svd(centered, full_matrices=False)
        evals = np.concatenate([sv**2, np.zeros(D - sv.size)])
        evecs = np.hstack([Vt.T, np.zeros((D, D - sv.size))])
        return mean, evals, evecs
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1].clip(min=0.0)
    evecs = evecs[:, ::-1]
    return mean, evals, evecs


def local_frame(cloud, graph: NeighborhoodGraph, i: int, d: int) -> LocalFrame:
    cloud = _as_cloud(cloud)
    D = cloud.dim
    if not 0 <= d <= D:
        raise InvalidParameterError(f"d must lie in [0, {D}], got {d}")
    pts = cloud.data[graph.patch(i)]
    mean, evals, evecs = patch_spectrum(pts)
    tol = max(evals[0], 0.0) * 1e-12
    rank = int(np.sum(evals > tol)) if evals[0] > 0 else 0
    degenerate = rank < d
    if rank < D:
        basis = _complete_basis(_fix_signs(evecs[:, :rank]), D)
        basis[:, rank:] = _fix_signs(basis[:, rank:])
        evals = np.concatenate([evals[:rank], np.zeros(D - rank)])
    else:
        basis = _fix_signs(evecs)
    return LocalFrame(
        center=cloud.data[i].copy(),
        mean=mean,
        tangent_basis=basis[:, :d],
        normal_basis=basis[:, d:],
        spectrum=evals,
        degenerate=degenerate,
    )


def local_frames(cloud, graph: NeighborhoodGraph, d: int) -> list:
    return [local_frame(cloud, graph, i, d) for i in range(_as_cloud(cloud).n)]


def local_coordinates(frame: LocalFrame, points) -> np.ndarray:
    """Coordinates of ``points`` in the chart <x_i; e_1..e_D> (tangent first)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != frame.center.shape[0]:
        raise InvalidDataError("points and frame have different ambient dimension")
    return (points - frame.center) @ frame.basis


def from_local_coordinates(frame: LocalFrame, coords) -> np.ndarray:
    return frame.center + np.atleast_2d(coords) @ frame.basis.T


def _dims_from_spectrum(evals: np.ndarray, ratio: float) -> int:
    total = evals.sum()
    if total <= 0:
        return 0
    frac = np.cumsum(evals) / total
    return int(min(np.searchsorted(frac, ratio * (1 - 1e-12)) + 1, len(evals)))


def estimate_dimension(cloud, graph: NeighborhoodGraph, ratio: float = 0.95) -> DimensionReport:
    """Local PCA dimension per patch; the global choice is the maximum."""
    cloud = _as_cloud(cloud)
    if not 0 < ratio <= 1:
        raise InvalidParameterError(f"ratio must lie in (0, 1], got {ratio}")
    dims = np.empty(cloud.n, dtype=np.int64)
    degenerate = []
    for i in range(cloud.n):
        _, evals, _ = patch_spectrum(cloud.data[graph.patch(i)])
        dims[i] = _dims_from_spectrum(evals, ratio)
        if dims[i] == 0:
            degenerate.append(i)
    values, counts = np.unique(dims, return_counts=True)
    histogram = {int(v): int(c) for v, c in zip(values, counts)}
    chosen = int(dims.max())
    return DimensionReport(
        per_point_dims=dims,
        chosen_d=chosen,
        histogram=histogram,
        ratio=ratio,
        not_reducible=chosen >= cloud.dim,
        degenerate_points=degenerate,
    )
