import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfml.core_geometry import PointCloud, knn_search, local_frames
from rfml.errors import NumericalError
from rfml.patch_model import (
    basis_size,
    curvature,
    design_matrix,
    enforce_elliptic,
    fit_patches,
    fit_quadratic,
    metric_tensor,
    riemann_tensor,
    second_fundamental_form,
    spherical_condition_check,
    tangent_derivatives,
)

from conftest import make_patch, mp_curvature, random_patch, sphere_cap_patch, unit_sphere


def graph_points(fn, t):
    return np.column_stack([t, fn(t)])


class TestFit:
    def test_exact_paraboloid(self):
        t = np.random.default_rng(0).uniform(-1, 1, (12, 2))
        p = fit_quadratic(graph_points(lambda t: (t**2).sum(1), t), 2, ridge=0.0)
        # basis order [1, x, y, xx, xy, yy]
        np.testing.assert_allclose(p.coeffs[0], [0, 0, 0, 1, 0, 1], atol=1e-8)

    def test_flat(self):
        t = np.random.default_rng(1).uniform(-1, 1, (10, 2))
        p = fit_quadratic(np.c_[t, np.zeros(10)], 2)
        np.testing.assert_allclose(p.coeffs, 0, atol=1e-10)

    def test_matches_extended_precision_normal_equations(self):
        rng = np.random.default_rng(2)
        t = rng.uniform(-1, 1, (12, 3))
        W = rng.normal(size=(2, basis_size(3)))
        coords = np.c_[t, design_matrix(t) @ W.T + 1e-3 * rng.normal(size=(12, 2))]
        p = fit_quadratic(coords, 3, ridge=0.0)
        A = design_matrix(t)
        with mpmath.workdps(50):
            M = mpmath.matrix((A.T @ A).tolist())
            for a in range(2):
                rhs = mpmath.matrix((A.T @ coords[:, 3 + a]).tolist())
                ref = np.array([float(x) for x in mpmath.lu_solve(M, rhs)])
                np.testing.assert_allclose(p.coeffs[a], ref, rtol=1e-6, atol=1e-9)

    def test_singular_without_ridge(self):
        t = np.c_[np.linspace(-1, 1, 8), np.zeros(8)]
        with pytest.raises(NumericalError):
            fit_quadratic(np.c_[t, np.zeros(8)], 2, ridge=0.0)

    def test_underdetermined_uses_ridge(self):
        rng = np.random.default_rng(3)
        p = fit_quadratic(rng.normal(size=(4, 3)), 2)
        assert np.all(np.isfinite(p.coeffs))

    def test_chart_origin_has_small_linear_terms(self):
        X = unit_sphere(400, seed=4)
        cloud = PointCloud(X)
        g = knn_search(cloud, 10)
        patches, _ = fit_patches(cloud, g, local_frames(cloud, g, 2))
        lin = np.array([np.abs(p.linear).max() for p in patches])
        assert np.median(lin) < 1e-3


class TestDerivatives:
    def test_paraboloid_values(self):
        p = make_patch(np.zeros((1, 2)), np.eye(2)[None])
        np.testing.assert_allclose(tangent_derivatives(p, [0, 0]), 0)
        np.testing.assert_allclose(tangent_derivatives(p, [1, 0]), [[1, 0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 10**6))
    def test_central_differences(self, d, codim, seed):
        rng = np.random.default_rng(seed)
        p = random_patch(rng, d, d + codim, elliptic=False, linear_scale=0.5)
        t = rng.uniform(-0.5, 0.5, d)
        V = tangent_derivatives(p, t)
        h = 1e-5
        fd = np.column_stack([(p.evaluate(t + h * e) - p.evaluate(t - h * e))[0] / (2 * h) for e in np.eye(d)])
        assert np.max(np.abs(V - fd)) <= 1e-6 * max(1.0, np.abs(V).max())


class TestMetric:
    def test_flat_identity(self):
        p = make_patch(np.zeros((1, 2)), np.zeros((1, 2, 2)))
        np.testing.assert_array_equal(metric_tensor(p, [0.3, -0.1]).g, np.eye(2))

    def test_paraboloid(self):
        p = make_patch(np.zeros((1, 2)), np.eye(2)[None])
        np.testing.assert_allclose(metric_tensor(p, [1, 0]).g, [[2, 0], [0, 1]])

    def test_positive_definite(self, rng):
        for _ in range(20):
            p = random_patch(rng, 3, 6, elliptic=False, linear_scale=1.0)
            g = metric_tensor(p, rng.uniform(-1, 1, 3)).g
            assert np.linalg.eigvalsh(g).min() >= 1 - 1e-12
            assert np.linalg.det(g) >= 1 - 1e-12


class TestSecondFundamentalForm:
    def test_paraboloid(self):
        h = second_fundamental_form(make_patch(np.zeros((1, 2)), np.eye(2)[None])).h
        np.testing.assert_array_equal(h[0], np.eye(2))

    def test_xy(self):
        t = np.random.default_rng(0).uniform(-1, 1, (10, 2))
        p = fit_quadratic(graph_points(lambda t: t[:, 0] * t[:, 1], t), 2, ridge=0.0)
        np.testing.assert_allclose(second_fundamental_form(p).h[0], [[0, 1], [1, 0]], atol=1e-10)

    def test_symmetric(self, rng):
        h = second_fundamental_form(random_patch(rng, 3, 5, elliptic=False)).h
        np.testing.assert_array_equal(h, h.transpose(0, 2, 1))


class TestCurvature:
    def test_flat(self):
        rep = curvature(make_patch(np.zeros((2, 2)), np.zeros((2, 2, 2))))
        assert rep.scalar == 0 and not rep.rm.any() and rep.sectional_max == 0

    def test_unit_sphere_chart(self):
        rep = curvature(sphere_cap_patch())
        assert abs(rep.scalar - 1) < 1e-6
        assert abs(rep.sectional_min - 1) < 1e-6 and abs(rep.sectional_max - 1) < 1e-6

    def test_sphere_radius_two(self):
        assert abs(curvature(sphere_cap_patch(radius=2.0)).scalar - 0.25) < 1e-12

    def test_three_sphere_chart(self):
        assert abs(curvature(sphere_cap_patch(d=3)).scalar - 2.0) < 1e-12  # Ric = (d-1) g

    @pytest.mark.parametrize("d,D", [(2, 3), (3, 6), (2, 5), (3, 8)])
    def test_brute_force_oracle(self, rng, d, D):
        for _ in range(5):
            p = random_patch(rng, d, D, linear_scale=0.3)
            t = rng.uniform(-0.2, 0.2, d)
            rep = curvature(p, t)
            rm, ric, scalar = mp_curvature(p.hessians(), metric_tensor(p, t).g)
            scale = np.abs(rm).max()
            assert np.abs(rep.rm - rm).max() <= 1e-10 * scale
            assert np.abs(rep.ricci - ric).max() <= 1e-10 * np.abs(ric).max()
            assert abs(rep.scalar - scalar) <= 1e-10 * abs(scalar)

    def test_riemann_symmetries(self, rng):
        p = random_patch(rng, 3, 6, elliptic=False)
        rm = riemann_tensor(p.hessians())
        np.testing.assert_allclose(rm, -rm.transpose(1, 0, 2, 3), atol=1e-12)
        np.testing.assert_allclose(rm, -rm.transpose(0, 1, 3, 2), atol=1e-12)
        np.testing.assert_allclose(rm, rm.transpose(2, 3, 0, 1), atol=1e-12)

    def test_surface_ricci_is_gauss_times_metric(self, rng):
        for _ in range(10):
            p = random_patch(rng, 2, 4, linear_scale=0.4)
            t = rng.uniform(-0.2, 0.2, 2)
            rep = curvature(p, t)
            g = metric_tensor(p, t).g
            kappa = rep.rm[0, 1, 1, 0] / np.linalg.det(g)
            np.testing.assert_allclose(rep.ricci, kappa * g, atol=1e-8 * max(1, abs(kappa)))


class TestSphericalCondition:
    def test_sphere(self):
        c = spherical_condition_check(sphere_cap_patch())
        assert c.nonneg and abs(c.pinch_ratio - 1) < 1e-12 and c.pinched

    def test_flat(self):
        c = spherical_condition_check(make_patch(np.zeros((1, 2)), np.zeros((1, 2, 2))))
        assert c.nonneg and c.pinch_ratio is None

    def test_saddle(self):
        p = make_patch(np.zeros((1, 2)), np.diag([2.0, -2.0])[None])
        assert curvature(p).sectional_min == pytest.approx(-4.0)
        assert not spherical_condition_check(p).nonneg


class TestEnforceElliptic:
    def test_elliptic_unchanged(self, rng):
        p = random_patch(rng, 2, 4)
        q = enforce_elliptic(p)
        assert q is p and not q.elliptic_clamped

    def test_concave_slice_kept(self):
        p = sphere_cap_patch()
        assert not enforce_elliptic(p).elliptic_clamped

    def test_saddle_clipped(self):
        p = make_patch(np.zeros((1, 2)), np.diag([2.0, -2.0])[None])
        q = enforce_elliptic(p)
        assert q.elliptic_clamped
        np.testing.assert_allclose(q.hessians()[0], np.diag([2.0, 0.0]), atol=1e-14)
        # z = x^2 in the [1, x, y, xx, xy, yy] basis
        np.testing.assert_allclose(q.coeffs[0], [0, 0, 0, 1, 0, 0], atol=1e-14)

    def test_zero_patch(self):
        p = make_patch(np.zeros((1, 2)), np.zeros((1, 2, 2)))
        assert not enforce_elliptic(p).elliptic_clamped

    def test_idempotent(self, rng):
        p = enforce_elliptic(random_patch(rng, 3, 5, elliptic=False))
        q = enforce_elliptic(p)
        np.testing.assert_allclose(q.coeffs, p.coeffs, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 3), st.integers(1, 4), st.integers(0, 10**6))
    def test_output_nonnegative_sectional(self, d, codim, seed):
        p = enforce_elliptic(random_patch(np.random.default_rng(seed), d, d + codim, elliptic=False))
        assert curvature(p).sectional_min >= -1e-12
