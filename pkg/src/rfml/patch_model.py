"""Second-order charts of local patches and their curvature.

A patch is written as a graph over its tangent coordinates,
f(x) = (x, f^{d+1}(x), ..., f^D(x)) with each f^alpha a quadratic polynomial
in the symmetric monomial basis [1, x^1..x^d, x^i x^j (i <= j)]. Curvature
follows from the Gauss equation with a flat ambient space, so everything is
computed from the Hessian slices h^alpha.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import NumericalError


def basis_size(d: int) -> int:
    return 1 + d + d * (d + 1) // 2


def quad_pairs(d: int):
    return [(i, j) for i in range(d) for j in range(i, d)]


def design_matrix(t: np.ndarray) -> np.ndarray:
    """Rows Phi(t_j) of the symmetric second-order monomial basis."""
    t = np.atleast_2d(t)
    m, d = t.shape
    cols = [np.ones(m)] + [t[:, i] for i in range(d)]
    cols += [t[:, i] * t[:, j] for i, j in quad_pairs(d)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class QuadraticPatch:
    d: int
    D: int
    coeffs: np.ndarray  # (D-d) x B
    neighbor_coords: np.ndarray  # (m, d) tangent coordinates, center first
    center_index: int = -1
    elliptic_clamped: bool = False
    normal_coords: Optional[np.ndarray] = None  # (m, D-d), kept for diagnostics

    @property
    def codim(self) -> int:
        return self.D - self.d

    @property
    def linear(self) -> np.ndarray:
        """(D-d) x d matrix of linear coefficients a_j^alpha."""
        return self.coeffs[:, 1 : 1 + self.d]

    def hessians(self) -> np.ndarray:
        """(D-d) x d x d Hessian slices of f^alpha."""
        d = self.d
        H = np.zeros((self.codim, d, d))
        for col, (i, j) in enumerate(quad_pairs(d), start=1 + d):
            if i == j:
                H[:, i, i] = 2.0 * self.coeffs[:, col]
            else:
                H[:, i, j] = self.coeffs[:, col]
                H[:, j, i] = self.coeffs[:, col]
        return H

    def evaluate(self, t) -> np.ndarray:
        """Normal components f^alpha(t), shape (m, D-d)."""
        return design_matrix(np.atleast_2d(t)) @ self.coeffs.T


def coeffs_from_hessians(linear: np.ndarray, H: np.ndarray, const=None) -> np.ndarray:
    codim, d = linear.shape
    out = np.zeros((codim, basis_size(d)))
    out[:, 0] = 0.0 if const is None else const
    out[:, 1 : 1 + d] = linear
    for col, (i, j) in enumerate(quad_pairs(d), start=1 + d):
        out[:, col] = H[:, i, i] / 2.0 if i == j else H[:, i, j]
    return out


def default_ridge(A: np.ndarray) -> float:
    return 1e-8 * np.trace(A.T @ A) / A.shape[1]


def fit_quadratic(coords, d: int, ridge: Optional[float] = None, center_index: int = -1) -> QuadraticPatch:
    """Least-squares quadratic chart over local coordinates.

    ``coords`` holds the patch in its local frame, tangent coordinates in the
    first ``d`` columns. With ``ridge=None`` a small ridge is used only when the
    design is rank deficient or underdetermined.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    m, D = coords.shape
    if not 0 < d < D:
        raise ValueError(f"need 0 < d < D, got d={d}, D={D}")
    t, n = coords[:, :d], coords[:, d:]
    A = design_matrix(t)
    B = A.shape[1]
    if ridge is None:
        ridge = default_ridge(A) if (m < B or np.linalg.matrix_rank(A) < B) else 0.0
    if ridge == 0.0:
        W, *_ = np.linalg.lstsq(A, n, rcond=None)
        if np.linalg.matrix_rank(A) < B:
            raise NumericalError("quadratic fit is singular with ridge=0; retry with ridge > 0")
    else:
        W = np.linalg.solve(A.T @ A + ridge * np.eye(B), A.T @ n)
    if not np.all(np.isfinite(W)):
        raise NumericalError("non-finite quadratic coefficients; retry with ridge > 0")
    return QuadraticPatch(d=d, D=D, coeffs=W.T.copy(), neighbor_coords=t.copy(),
                          center_index=center_index, normal_coords=n.copy())


def tangent_derivatives(patch: QuadraticPatch, t) -> np.ndarray:
    """(D-d) x d matrix whose column j is V_j(t) = d f^alpha / d x^j."""
    t = np.asarray(t, dtype=float).reshape(patch.d)
    return patch.linear + patch.hessians() @ t


@dataclass(frozen=True)
class MetricTensor:
    g: np.ndarray


def metric_from_v(V: np.ndarray) -> np.ndarray:
    """g = I + V^T V for V of shape (D-d) x d."""
    return np.eye(V.shape[1]) + V.T @ V


def metric_tensor(patch: QuadraticPatch, t) -> MetricTensor:
    return MetricTensor(metric_from_v(tangent_derivatives(patch, t)))


@dataclass(frozen=True)
class SecondFundamentalForm:
    h: np.ndarray  # (D-d) x d x d


def second_fundamental_form(patch: QuadraticPatch) -> SecondFundamentalForm:
    return SecondFundamentalForm(patch.hessians())


@dataclass(frozen=True)
class CurvatureReport:
    rm: np.ndarray
    ricci: np.ndarray
    scalar: float
    sectional_min: float
    sectional_max: float


def riemann_tensor(h: np.ndarray) -> np.ndarray:
    """rm_{jklm} = sum_a h_jm h_kl - h_jl h_km (Gauss equation, flat ambient)."""
    codim, d, _ = h.shape
    flat = h.reshape(codim, d * d)
    P = (flat.T @ flat).reshape(d, d, d, d)  # P[j, m, k, l] = sum_a h_jm h_kl
    return P.transpose(0, 2, 3, 1) - P.transpose(0, 2, 1, 3)


def curvature_from(h: np.ndarray, g: np.ndarray) -> CurvatureReport:
    d = g.shape[0]
    rm = riemann_tensor(h)
    ginv = np.linalg.inv(g)
    ricci = np.einsum("lm,ljkm->jk", ginv, rm)
    ricci = 0.5 * (ricci + ricci.T)
    scalar = float(np.trace(ginv @ ricci) / d) if d else 0.0
    if d >= 2:
        secs = []
        for j in range(d):
            for k in range(j + 1, d):
                area = g[j, j] * g[k, k] - g[j, k] ** 2
                secs.append(rm[j, k, k, j] / area)
        smin, smax = float(min(secs)), float(max(secs))
    else:
        smin = smax = 0.0
    return CurvatureReport(rm=rm, ricci=ricci, scalar=scalar, sectional_min=smin, sectional_max=smax)


def curvature(patch: QuadraticPatch, t=None) -> CurvatureReport:
    if t is None:
        t = np.zeros(patch.d)
    return curvature_from(patch.hessians(), metric_tensor(patch, t).g)


@dataclass(frozen=True)
class SphericalCondition:
    nonneg: bool
    pinch_ratio: Optional[float]

    @property
    def pinched(self) -> bool:
        """max K / min K < 4, the pinching that guarantees a round limit."""
        return self.pinch_ratio is not None and self.pinch_ratio < 4.0


def spherical_condition_check(patch: QuadraticPatch, tol: float = 1e-12) -> SphericalCondition:
    rep = curvature(patch)
    nonneg = rep.sectional_min >= -tol
    ratio = rep.sectional_max / rep.sectional_min if rep.sectional_min > tol else None
    return SphericalCondition(nonneg=bool(nonneg), pinch_ratio=ratio)


def enforce_elliptic(patch: QuadraticPatch, rtol: float = 1e-12) -> QuadraticPatch:
    """Project every Hessian slice onto the definite cone.

    A slice's orientation (sign of its trace) is kept, since flipping a normal
    vector negates h^alpha without changing the curvature; eigenvalues of the
    opposite sign are clipped to zero. Eigenvalues within ``rtol`` of the
    slice's largest magnitude count as zero and are left alone.
    """
    H = patch.hessians()
    sign = np.where(np.trace(H, axis1=1, axis2=2) < 0, -1.0, 1.0)
    w, U = np.linalg.eigh(sign[:, None, None] * H)
    tol = rtol * np.abs(w).max(axis=1)
    bad = np.any(w < -tol[:, None], axis=1)
    if not np.any(bad):
        return patch
    out = H.copy()
    wc = np.clip(w[bad], 0.0, None)
    fixed = sign[bad, None, None] * np.einsum("aij,aj,akj->aik", U[bad], wc, U[bad])
    out[bad] = 0.5 * (fixed + fixed.transpose(0, 2, 1))
    coeffs = coeffs_from_hessians(patch.linear, out, patch.coeffs[:, 0])
    return replace(patch, coeffs=coeffs, elliptic_clamped=True)


def _inv_sqrt_spd(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(M)
    return (U / np.sqrt(w)) @ U.T


def refine_frame(frame, patch: QuadraticPatch):
    """Rotate ``frame`` so its tangent block is the chart's tangent plane at the center.

    With L the chart's linear coefficients, the new tangent block spans
    T + N L and the new normal block spans N - T L^T. Both are orthonormalized
    symmetrically, which is the smallest rotation of the old frame. The
    normal update is a rank-d correction, so nothing of size D x D is formed.
    """
    from .core_geometry import LocalFrame, _fix_signs

    L = patch.linear
    T, N = frame.tangent_basis, frame.normal_basis
    tangent = (T + N @ L) @ _inv_sqrt_spd(np.eye(patch.d) + L.T @ L)
    # (I + L L^T)^(-1/2) = I + U diag((1 + s^2)^(-1/2) - 1) U^T for L = U S W^T
    U, sv, _ = np.linalg.svd(L, full_matrices=False)
    M = N - T @ L.T
    normal = M + ((M @ U) * (1.0 / np.sqrt(1.0 + sv**2) - 1.0)) @ U.T
    basis = _fix_signs(np.hstack([tangent, normal]))
    return LocalFrame(center=frame.center, mean=frame.mean, tangent_basis=basis[:, : patch.d],
                      normal_basis=basis[:, patch.d :], spectrum=frame.spectrum, degenerate=frame.degenerate)


def fit_patch(points: np.ndarray, frame, ridge=None, refine: int = 2, center_index: int = -1):
    """Fit a chart to ``points`` (center first), refining the frame ``refine`` times.

    Returns the patch and the frame it is expressed in.
    """
    from .core_geometry import local_coordinates

    patch = fit_quadratic(local_coordinates(frame, points), frame.d, ridge=ridge, center_index=center_index)
    for _ in range(refine):
        frame = refine_frame(frame, patch)
        patch = fit_quadratic(local_coordinates(frame, points), frame.d, ridge=ridge, center_index=center_index)
    return patch, frame


def fit_patches(cloud, graph, frames, ridge=None, elliptic=True, refine: int = 2):
    """Quadratic chart per point, optionally clamped to be elliptic.

    Returns ``(patches, frames)`` where the frames are the refined ones the
    charts are expressed in.
    """
    X = cloud.data
    patches, out_frames = [], []
    for i, fr in enumerate(frames):
        p, fr = fit_patch(X[graph.patch(i)], fr, ridge=ridge, refine=refine, center_index=i)
        patches.append(enforce_elliptic(p) if elliptic else p)
        out_frames.append(fr)
    return patches, out_frames
