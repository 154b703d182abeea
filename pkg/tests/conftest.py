import logging

import mpmath
import numpy as np
import pytest

from rfml.patch_model import QuadraticPatch, basis_size, coeffs_from_hessians


@pytest.fixture(autouse=True)
def _quiet_flow_logging():
    logging.getLogger("rfml").setLevel(logging.ERROR)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, d, scale=1.0):
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T / d + 0.1 * np.eye(d))


def make_patch(linear, H, coords=None, center_index=0):
    """QuadraticPatch from linear coefficients (codim x d) and Hessians (codim x d x d)."""
    linear = np.asarray(linear, dtype=float)
    H = np.asarray(H, dtype=float)
    codim, d = linear.shape
    if coords is None:
        g = np.linspace(-0.2, 0.2, 3)
        grid = np.array(np.meshgrid(*([g] * d))).reshape(d, -1).T
        coords = np.vstack([np.zeros(d), grid[np.any(grid != 0, axis=1)]])
    return QuadraticPatch(d=d, D=d + codim, coeffs=coeffs_from_hessians(linear, H),
                          neighbor_coords=np.asarray(coords, dtype=float), center_index=center_index)


def random_patch(rng, d, D, elliptic=True, linear_scale=0.0, m=None):
    codim = D - d
    H = np.stack([random_psd(rng, d) if elliptic else rng.normal(size=(d, d)) for _ in range(codim)])
    H = 0.5 * (H + H.transpose(0, 2, 1))
    linear = linear_scale * rng.normal(size=(codim, d))
    m = m or max(basis_size(d) + 4, 12)
    coords = np.vstack([np.zeros(d), rng.uniform(-0.3, 0.3, size=(m - 1, d))])
    return make_patch(linear, H, coords)


def sphere_cap_patch(d=2, radius=1.0, m=25, rng=None):
    """Quadratic chart of the radius-r sphere at its north pole, z = -|t|^2 / 2r."""
    H = -np.eye(d)[None] / radius
    rng = rng or np.random.default_rng(0)
    coords = np.vstack([np.zeros(d), rng.uniform(-0.1, 0.1, size=(m - 1, d))])
    return make_patch(np.zeros((1, d)), H, coords)


def unit_sphere(n, seed=0):
    g = np.random.default_rng(seed).normal(size=(n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def mp_curvature(h, g):
    """Riemann tensor, Ricci and scalar by explicit loops at 40 digits."""
    codim, d, _ = h.shape
    with mpmath.workdps(40):
        H = [[[mpmath.mpf(float(h[a, j, k])) for k in range(d)] for j in range(d)] for a in range(codim)]
        ginv = mpmath.inverse(mpmath.matrix(g.tolist()))
        rm = np.empty((d, d, d, d), dtype=object)
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    for m in range(d):
                        rm[j, k, l, m] = mpmath.fsum(H[a][j][m] * H[a][k][l] - H[a][j][l] * H[a][k][m]
                                                     for a in range(codim))
        ric = [[mpmath.fsum(ginv[l, m] * rm[l, j, k, m] for l in range(d) for m in range(d))
                for k in range(d)] for j in range(d)]
        scalar = mpmath.fsum(ginv[j, k] * ric[k][j] for j in range(d) for k in range(d)) / d
        return (np.vectorize(float)(rm), np.array([[float(x) for x in r] for r in ric]), float(scalar))
