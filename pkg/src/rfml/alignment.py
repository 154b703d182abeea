"""Global alignment of the flowed patches onto a sphere of curvature C.

Each patch contributes a local reconstruction-error block. The block
projects out constants and the span of the patch's own (centered)
coordinates, and the sum of these blocks is the alignment matrix B. Its low
eigenvectors give global coordinates that agree with every patch up to an
affine map. The remaining affine freedom is fixed by matching patch
distances, and the points are then placed on the sphere of radius 1/sqrt(C).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import least_squares

from .core_geometry import _fix_signs
from .errors import InvalidDataError, InvalidParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentProblem:
    """Local coordinates of every patch and the global indices of its points."""

    patch_coords: Sequence[np.ndarray]
    membership: Sequence[np.ndarray]
    n_points: Optional[int] = None

    def __post_init__(self):
        if len(self.patch_coords) != len(self.membership):
            raise InvalidDataError("patch_coords and membership differ in length")
        coords = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.patch_coords]
        members = [np.asarray(m, dtype=np.int64).ravel() for m in self.membership]
        for i, (c, m) in enumerate(zip(coords, members)):
            if m.size == 0:
                raise InvalidDataError(f"patch {i} is empty")
            if c.shape[0] != m.size:
                raise InvalidDataError(f"patch {i}: {c.shape[0]} coordinate rows for {m.size} members")
        n = self.n_points
        if n is None:
            n = int(max(m.max() for m in members)) + 1 if members else 0
        for i, m in enumerate(members):
            if m.min() < 0 or m.max() >= n:
                raise InvalidDataError(f"patch {i} references a point outside [0, {n})")
        object.__setattr__(self, "patch_coords", coords)
        object.__setattr__(self, "membership", members)
        object.__setattr__(self, "n_points", n)

    @property
    def N(self) -> int:
        return self.n_points

    @property
    def K(self) -> int:
        return self.membership[0].size - 1

    @property
    def D(self) -> int:
        return max(c.shape[1] for c in self.patch_coords)


@dataclass(frozen=True)
class SphericalEmbedding:
    points: np.ndarray
    curvature: float
    warnings: list = field(default_factory=list)

    @property
    def radius(self) -> float:
        return 1.0 / np.sqrt(self.curvature)


def local_error_block(Y: np.ndarray) -> np.ndarray:
    """W = (I - ee^T/m)(I - Yc Yc^+) for one patch, Yc the centered coordinates."""
    Y = np.atleast_2d(Y)
    m = Y.shape[0]
    Yc = Y - Y.mean(axis=0)
    U, s, _ = np.linalg.svd(Yc, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    U = U[:, :rank]
    center = np.eye(m) - np.full((m, m), 1.0 / m)
    return center @ (np.eye(m) - U @ U.T)


def build_alignment_matrix(problem: AlignmentProblem) -> np.ndarray:
    """Sum of W_i W_i^T scattered into the rows/columns of each patch."""
    N = problem.N
    B = np.zeros((N, N))
    for Y, idx in zip(problem.patch_coords, problem.membership):
        W = local_error_block(Y)
        B[np.ix_(idx, idx)] += W @ W.T
    return 0.5 * (B + B.T)


def solve_global_coordinates(B: np.ndarray, D: int, warnings: Optional[list] = None) -> np.ndarray:
    """Eigenvectors of B for the 2nd through (D+1)-th smallest eigenvalues."""
    N = B.shape[0]
    if not 1 <= D <= N - 2:
        raise InvalidParameterError(f"need 1 <= D <= N - 2, got D={D}, N={N}")
    top = min(D + 1, N - 1)
    evals, evecs = eigh(B, subset_by_index=[0, top])
    scale = max(abs(evals).max(), 1e-300)
    if top > D and abs(evals[D + 1] - evals[D]) <= 1e-10 * scale:
        msg = "eigenvalue multiplicity straddles the selection cutoff"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    return _fix_signs(evecs[:, 1 : D + 1])


def project_to_sphere(coords, C: float) -> SphericalEmbedding:
    """Rescale every row to norm 1/sqrt(C)."""
    if not C > 0:
        raise InvalidParameterError(f"curvature must be positive, got {C}")
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    norms = np.linalg.norm(coords, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise InvalidDataError(f"point {zero[0]} sits at the origin and has no direction")
    points = coords / norms[:, None] / np.sqrt(C)
    return SphericalEmbedding(points=points, curvature=float(C))


def recover_metric(U: np.ndarray, problem: AlignmentProblem) -> np.ndarray:
    """PSD G so that center-to-neighbour distances in U under G match the patches.

    Solved as a linear least-squares problem in the entries of G, then
    projected onto the PSD cone.
    """
    D = U.shape[1]
    iu = np.triu_indices(D)
    weight = np.where(iu[0] == iu[1], 1.0, 2.0)
    rows, rhs = [], []
    for Y, idx in zip(problem.patch_coords, problem.membership):
        delta = U[idx[1:]] - U[idx[0]]
        rows.append((delta[:, iu[0]] * delta[:, iu[1]]) * weight)
        rhs.append(np.sum((Y[1:] - Y[0]) ** 2, axis=1))
    A, b = np.vstack(rows), np.concatenate(rhs)
    g, *_ = np.linalg.lstsq(A, b, rcond=None)
    G = np.zeros((D, D))
    G[iu] = g
    G = G + np.triu(G, 1).T
    w, V = np.linalg.eigh(G)
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T


def _sqrtm_psd(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def fit_sphere_center(X: np.ndarray, radius: float) -> np.ndarray:
    """Center c minimizing sum (|x - c| - radius)^2, best of a few deterministic starts."""
    mean = X.mean(axis=0)
    Xc = X - mean
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    normal = Vt[-1]
    starts = [mean + radius * normal, mean - radius * normal]
    # algebraic fit: |x|^2 = 2 c.x + k
    A = np.hstack([2 * Xc, np.ones((X.shape[0], 1))])
    sol, *_ = np.linalg.lstsq(A, np.sum(Xc**2, axis=1), rcond=None)
    starts.append(mean + sol[:-1])
    scale = max(radius, 1e-12)

    def resid(c):
        return (np.linalg.norm(X - c, axis=1) - radius) / scale

    best, best_cost = None, np.inf
    for c0 in starts:
        r = least_squares(resid, c0, method="lm", xtol=1e-14, ftol=1e-14)
        if r.cost < best_cost:
            best, best_cost = r.x, r.cost
    return best


def align(flow_result, C: float, membership=None, D: Optional[int] = None) -> SphericalEmbedding:
    """Assemble the flowed patches into one point set on the sphere of curvature C."""
    if not C > 0:
        raise InvalidParameterError(f"curvature must be positive, got {C}")
    if membership is None:
        membership = getattr(flow_result, "membership", None)
    if membership is None:
        raise InvalidParameterError("patch membership is required for alignment")
    problem = AlignmentProblem(flow_result.flowed_patches, membership)
    D = problem.D if D is None else D
    warns: list = []
    B = build_alignment_matrix(problem)
    U = solve_global_coordinates(B, D, warns)
    U = U @ _sqrtm_psd(recover_metric(U, problem))
    radius = 1.0 / np.sqrt(C)
    center = fit_sphere_center(U, radius)
    emb = project_to_sphere(U - center, C)
    return SphericalEmbedding(points=emb.points, curvature=emb.curvature, warnings=warns)
