"""Dimensionality-reduction baselines and the RF-ML pipeline driver.

All spectral methods use dense symmetric eigensolvers with a fixed sign
convention, so repeated runs are bit-identical. Every embedder accepts a
``DistanceBackend``; the spherical backend measures great-circle distance
and is what the pipeline's final stage uses once points live on a sphere.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .alignment import AlignmentProblem, align, build_alignment_matrix, solve_global_coordinates
from .core_geometry import (
    PointCloud,
    _fix_signs,
    estimate_dimension,
    knn_search,
    local_coordinates,
    local_frames,
)
from .errors import DisconnectedGraphError, InvalidDataError, InvalidParameterError, NotReducibleError
from .patch_model import curvature, fit_patches
from .ricci_flow import FlowConfig, choose_target_c, run_flow

log = logging.getLogger(__name__)

METHODS = ("pca", "isomap", "lle", "lep", "ltsa", "rfml")


@dataclass(frozen=True)
class DistanceBackend:
    kind: str = "euclidean"
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "spherical"):
            raise InvalidParameterError(f"unknown distance backend {self.kind!r}")
        if self.kind == "spherical" and not (self.radius is not None and self.radius > 0):
            raise InvalidParameterError("spherical backend needs a positive radius")

    @classmethod
    def spherical(cls, radius: float) -> "DistanceBackend":
        return cls("spherical", float(radius))

    def validate(self, X: np.ndarray) -> None:
        if self.kind == "spherical":
            norms = np.linalg.norm(X, axis=1)
            if np.any(np.abs(norms - self.radius) > 1e-6 * self.radius):
                raise InvalidDataError("points are not on the backend's sphere")

    def from_chord(self, chord: np.ndarray) -> np.ndarray:
        """Convert Euclidean (chord) distances to this backend's distances."""
        if self.kind == "euclidean":
            return chord
        r = self.radius
        return 2.0 * r * np.arcsin(np.clip(chord / (2.0 * r), 0.0, 1.0))


EUCLIDEAN = DistanceBackend()


@dataclass
class EmbeddingResult:
    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def spherical_distance(p, q, r: float, rtol: float = 1e-6) -> float:
    """Great-circle distance between two points on the sphere of radius r."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not r > 0:
        raise InvalidParameterError("radius must be positive")
    for v in (p, q):
        if abs(np.linalg.norm(v) - r) > rtol * r:
            raise InvalidDataError("point is not on the sphere of the given radius")
    return float(r * np.arccos(np.clip(p @ q / r**2, -1.0, 1.0)))


def _cloud(X) -> PointCloud:
    return X if isinstance(X, PointCloud) else PointCloud(X)


def _check_d(d: int, D: int):
    if not 1 <= d <= D:
        raise InvalidParameterError(f"d must lie in [1, {D}], got {d}")


def _knn_graph(X: np.ndarray, K: int, backend: DistanceBackend) -> csr_matrix:
    """Symmetrized (union) kNN graph with backend edge lengths."""
    g = knn_search(PointCloud(X), K)
    N = X.shape[0]
    rows = np.repeat(np.arange(N), K)
    w = backend.from_chord(g.distances.ravel())
    A = csr_matrix((w, (rows, g.indices.ravel())), shape=(N, N))
    return A.maximum(A.T).tocsr()


def _check_connected(A: csr_matrix):
    n, _ = connected_components(A, directed=False)
    if n > 1:
        raise DisconnectedGraphError(n)


def _bottom_eigvecs(M: np.ndarray, d: int, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Eigenvectors 2..d+1 (ascending) of M, or of the pencil (M, b)."""
    _, V = eigh(M, b, subset_by_index=[0, d])
    return _fix_signs(V[:, 1 : d + 1])


def _tangent_pca(X: np.ndarray, d: int, radius: float) -> np.ndarray:
    """PCA of the log-map images at the normalized extrinsic mean."""
    m = X.mean(axis=0)
    nrm = np.linalg.norm(m)
    if nrm < 1e-12 * radius:
        # no preferred hemisphere; fall back to the first point deterministically
        m = X[0]
        nrm = np.linalg.norm(m)
    u = m / nrm
    cos = np.clip(X @ u / radius, -1.0, 1.0)
    theta = np.arccos(cos)
    perp = X / radius - cos[:, None] * u
    pn = np.linalg.norm(perp, axis=1)
    pn[pn == 0] = 1.0
    L = radius * theta[:, None] * perp / pn[:, None]
    return _linear_pca(L, d)


def _linear_pca(X: np.ndarray, d: int) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = _fix_signs(Vt[:d].T)
    return Xc @ comps


def pca_embed(cloud, d: int, backend: DistanceBackend = EUCLIDEAN) -> EmbeddingResult:
    """Top-d principal components; with a spherical backend, PCA in the tangent
    space at the mean after the log map."""
    X = _cloud(cloud).data
    _check_d(d, X.shape[1])
    backend.validate(X)
    if backend.kind == "spherical":
        Z = _tangent_pca(X, d, backend.radius)
    else:
        Z = _linear_pca(X, d)
    return EmbeddingResult(Z, "pca", {"d": d, "backend": backend.kind})


def classical_mds(D2: np.ndarray, d: int) -> np.ndarray:
    """Top-d coordinates from a squared-distance matrix by double centering."""
    N = D2.shape[0]
    J = np.eye(N) - np.full((N, N), 1.0 / N)
    G = -0.5 * J @ D2 @ J
    G = 0.5 * (G + G.T)
    w, V = eigh(G, subset_by_index=[N - d, N - 1])
    w, V = w[::-1], _fix_signs(V[:, ::-1])
    return V * np.sqrt(np.clip(w, 0.0, None))


def isomap_embed(cloud, d: int, K: int = 10, backend: DistanceBackend = EUCLIDEAN) -> EmbeddingResult:
    X = _cloud(cloud).data
    _check_d(d, X.shape[1])
    backend.validate(X)
    A = _knn_graph(X, K, backend)
    _check_connected(A)
    geo = shortest_path(A, method="D", directed=False)
    Z = classical_mds(geo**2, d)
    return EmbeddingResult(Z, "isomap", {"d": d, "K": K, "backend": backend.kind})


def lle_weights(X: np.ndarray, indices: np.ndarray, reg: float = 1e-3) -> np.ndarray:
    """Row-stochastic reconstruction weights, Gram ridge reg * trace."""
    N, K = indices.shape
    W = np.zeros((N, K))
    ones = np.ones(K)
    for i in range(N):
        Z = X[indices[i]] - X[i]
        G = Z @ Z.T
        tr = np.trace(G)
        G = G + (reg * tr if tr > 0 else reg) * np.eye(K)
        w = np.linalg.solve(G, ones)
        W[i] = w / w.sum()
    return W


def lle_embed(cloud, d: int, K: int = 10, backend: DistanceBackend = EUCLIDEAN, reg: float = 1e-3) -> EmbeddingResult:
    """Locally linear embedding.

    Chord order equals geodesic order on a sphere, so the backend only affects
    validation here; weights are computed from ambient coordinates.
    """
    X = _cloud(cloud).data
    _check_d(d, X.shape[1])
    if K < d:
        raise InvalidParameterError("LLE needs K >= d")
    backend.validate(X)
    N = X.shape[0]
    g = knn_search(PointCloud(X), K)
    W = lle_weights(X, g.indices, reg)
    IW = np.eye(N)
    IW[np.repeat(np.arange(N), K), g.indices.ravel()] -= W.ravel()
    M = IW.T @ IW
    Z = _bottom_eigvecs(0.5 * (M + M.T), d)
    Z = Z - Z.mean(axis=0)
    return EmbeddingResult(Z, "lle", {"d": d, "K": K, "reg": reg, "backend": backend.kind})


def lep_embed(cloud, d: int, K: int = 10, backend: DistanceBackend = EUCLIDEAN,
              heat_sigma: Optional[float] = None) -> EmbeddingResult:
    """Laplacian eigenmaps with heat-kernel weights on the symmetrized kNN graph."""
    X = _cloud(cloud).data
    _check_d(d, X.shape[1])
    backend.validate(X)
    N = X.shape[0]
    A = _knn_graph(X, K, backend)
    _check_connected(A)
    if heat_sigma is None:
        g = knn_search(PointCloud(X), K)
        heat_sigma = float(backend.from_chord(g.distances).mean())
    if not heat_sigma > 0:
        raise InvalidParameterError("heat_sigma must be positive")
    Wd = A.toarray()
    mask = Wd > 0
    Wd[mask] = np.exp(-(Wd[mask] ** 2) / (2.0 * heat_sigma**2))
    deg = Wd.sum(axis=1)
    L = np.diag(deg) - Wd
    Z = _bottom_eigvecs(L, d, np.diag(deg))
    Z = Z - Z.mean(axis=0)
    return EmbeddingResult(Z, "lep", {"d": d, "K": K, "heat_sigma": heat_sigma, "backend": backend.kind})


def ltsa_embed(cloud, d: int, K: int = 10, backend: DistanceBackend = EUCLIDEAN) -> EmbeddingResult:
    """Local tangent space alignment on PCA tangent coordinates."""
    cloud = _cloud(cloud)
    X = cloud.data
    _check_d(d, X.shape[1])
    if K < d:
        raise InvalidParameterError("LTSA needs K >= d")
    backend.validate(X)
    g = knn_search(cloud, K)
    frames = local_frames(cloud, g, d)
    members = [g.patch(i) for i in range(cloud.n)]
    coords = [local_coordinates(f, X[m])[:, :d] for f, m in zip(frames, members)]
    B = build_alignment_matrix(AlignmentProblem(coords, members, cloud.n))
    Z = solve_global_coordinates(B, d)
    Z = Z - Z.mean(axis=0)
    return EmbeddingResult(Z, "ltsa", {"d": d, "K": K, "backend": backend.kind})


BASELINES = {
    "pca": lambda X, d, K, b: pca_embed(X, d, b),
    "isomap": isomap_embed,
    "lle": lle_embed,
    "lep": lep_embed,
    "ltsa": ltsa_embed,
}


def embed(cloud, method: str, d: int, K: int = 10, **kwargs) -> EmbeddingResult:
    """Dispatch by method name; ``rfml`` forwards keyword arguments."""
    if method == "rfml":
        return rfml_embed(cloud, d=d, K=K, **kwargs)
    if method not in BASELINES:
        raise InvalidParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return BASELINES[method](cloud, d, K, kwargs.get("backend", EUCLIDEAN))


def rfml_embed(cloud, d: Optional[int] = None, K: int = 10, flow_config: Optional[FlowConfig] = None,
               final_method: str = "auto", ratio: float = 0.95, trace_path=None) -> EmbeddingResult:
    """Ricci-flow manifold learning.

    kNN patches are fitted with elliptic quadratic charts, flowed to a common
    curvature C, aligned onto the sphere of curvature C, and reduced to d
    dimensions with ``final_method`` under the spherical metric.

    When C is below the flow tolerance the data is treated as flat: the
    spherical stage degenerates to Euclidean space and the final method runs
    on the input directly. ``final_method="auto"`` picks Isomap for flat data
    and tangent-space PCA on the sphere otherwise.
    """
    cloud = _cloud(cloud)
    flow_config = flow_config or FlowConfig()
    if final_method not in ("auto",) + tuple(BASELINES):
        raise InvalidParameterError(f"unknown final method {final_method!r}")
    graph = knn_search(cloud, K)
    dims = estimate_dimension(cloud, graph, ratio)
    if d is None:
        if dims.not_reducible:
            raise NotReducibleError(
                f"estimated intrinsic dimension {dims.chosen_d} equals the ambient dimension {cloud.dim}")
        d = dims.chosen_d
    if d >= cloud.dim:
        raise NotReducibleError(f"d={d} leaves nothing to reduce in ambient dimension {cloud.dim}")
    _check_d(d, cloud.dim)

    frames = local_frames(cloud, graph, d)
    patches, frames = fit_patches(cloud, graph, frames)
    C = choose_target_c([curvature(p) for p in patches], flow_config.target_c)
    members = [graph.patch(i) for i in range(cloud.n)]
    flow = run_flow(patches, flow_config, trace_path=trace_path, C=C, membership=members)
    flat = flow_config.target_c is None and C <= flow_config.tolerance(C)

    diagnostics = {
        "C": flow.c_used,
        "flat": bool(flat),
        "converged_fraction": flow.converged_fraction,
        "initial_energy": flow.initial_energy,
        "total_energy": flow.total_energy,
        "iterations_max": int(flow.iterations.max()),
        "iterations_median": float(np.median(flow.iterations)),
        "elliptic_clamped_fraction": float(np.mean([p.elliptic_clamped for p in patches])),
        "monitor_ok_fraction": float(np.mean(flow.monitor_ok)),
        "dimension_histogram": dims.histogram,
        "warnings": [],
    }
    if flat:
        final = "isomap" if final_method == "auto" else final_method
        inner = BASELINES[final](cloud, d, K, EUCLIDEAN)
    else:
        final = "pca" if final_method == "auto" else final_method
        sphere = align(flow, C)
        diagnostics["warnings"] += sphere.warnings
        diagnostics["radius"] = sphere.radius
        inner = BASELINES[final](sphere.points, d, K, DistanceBackend.spherical(sphere.radius))
    diagnostics["final_method"] = final
    params = {"d": d, "K": K, "final_method": final_method, "ratio": ratio,
              "dt": flow_config.dt, "tol": flow_config.tol, "max_iters": flow_config.max_iters,
              "lam": flow_config.lam, "target_c": flow_config.target_c}
    return EmbeddingResult(inner.coords, "rfml", params, diagnostics)
