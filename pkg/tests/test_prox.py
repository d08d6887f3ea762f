import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import null_space

from linfshape.errors import InvalidArgumentError
from linfshape.numerics import spd_factorize
from linfshape.oracle import (
    brute_force_prox_check,
    enumerate_l1_ball_projection,
    enumerate_soft_threshold,
    nullspace_affine_projection,
)
from linfshape.prox import prox_affine, prox_linf, project_l1_ball, soft_threshold

elems = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
small_vec = arrays(np.float64, st.integers(1, 6), elements=elems)
positive = st.floats(1e-3, 20, allow_nan=False)


def pair(data, size):
    return data.draw(arrays(np.float64, size, elements=elems))


class TestSoftThreshold:
    def test_examples(self):
        np.testing.assert_array_equal(soft_threshold([2, -0.5, 1.5], 1.0), [1, 0, 0.5])
        np.testing.assert_array_equal(soft_threshold([3, -3], 5), [0, 0])

    def test_zero_threshold_is_identity(self, rng):
        v = rng.standard_normal(10)
        np.testing.assert_array_equal(soft_threshold(v, 0.0), v)

    def test_negative_threshold(self):
        with pytest.raises(InvalidArgumentError):
            soft_threshold([1.0], -0.1)

    @pytest.mark.parametrize("v", [[0.7], [-2.3], [1.2, -0.4], [-3.0, 2.5]])
    def test_grid_minimizer(self, v):
        v = np.asarray(v)
        t = 0.8
        axis = np.arange(-4.0, 4.0 + 1e-12, 1e-3) if v.size == 1 else np.arange(-4.0, 4.0, 5e-3)
        if v.size == 1:
            pts = axis[:, None]
        else:
            pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
        f = t * np.abs(pts).sum(1) + 0.5 * ((pts - v) ** 2).sum(1)
        best = pts[np.argmin(f)]
        assert np.max(np.abs(best - soft_threshold(v, t))) < 1e-4 + 5e-3

    @given(small_vec, st.floats(0, 20))
    def test_matches_enumeration(self, v, t):
        np.testing.assert_allclose(soft_threshold(v, t), enumerate_soft_threshold(v, t), atol=1e-12)


class TestProjectL1Ball:
    def test_examples(self):
        r = project_l1_ball([3, 0], 1)
        np.testing.assert_allclose(r.projected, [1, 0])
        assert r.lambda_star == pytest.approx(2)
        r = project_l1_ball([0.3, -0.2], 1)
        np.testing.assert_array_equal(r.projected, [0.3, -0.2])
        assert r.lambda_star == 0.0

    def test_equal_entries(self):
        r = project_l1_ball([0.6, 0.6], 1)
        np.testing.assert_allclose(r.projected, [0.5, 0.5])
        assert r.lambda_star == pytest.approx(0.1)
        # the same root found by scanning phi on a fine grid
        grid = np.linspace(0, 0.6, 600001)
        phi = np.maximum(0.6 - grid, 0) * 2 - 1
        assert grid[np.argmin(np.abs(phi))] == pytest.approx(0.1, abs=1e-6)

    def test_bad_radius(self):
        with pytest.raises(InvalidArgumentError):
            project_l1_ball([1.0], 0.0)
        with pytest.raises(InvalidArgumentError):
            project_l1_ball([1.0], 1.0, method="newton")

    @given(arrays(np.float64, st.integers(1, 4), elements=elems), positive)
    def test_matches_enumeration(self, v, radius):
        got = project_l1_ball(v, radius).projected
        np.testing.assert_allclose(got, enumerate_l1_ball_projection(v, radius), atol=1e-8)

    @given(small_vec, positive)
    def test_inside_and_on_boundary(self, v, radius):
        r = project_l1_ball(v, radius)
        assert np.abs(r.projected).sum() <= radius + 1e-9
        if np.abs(v).sum() <= radius:
            np.testing.assert_array_equal(r.projected, v)
            assert r.lambda_star == 0.0
        else:
            assert np.abs(r.projected).sum() == pytest.approx(radius, rel=1e-9)

    @given(small_vec, positive)
    def test_bisection_agrees(self, v, radius):
        a = project_l1_ball(v, radius).projected
        b = project_l1_ball(v, radius, method="bisect").projected
        np.testing.assert_allclose(a, b, atol=1e-9 * max(1.0, np.abs(v).max()))

    @given(small_vec, positive)
    def test_phi_nonincreasing(self, v, radius):
        lams = np.linspace(0, np.abs(v).max() + 1, 50)
        phi = [np.abs(soft_threshold(v, lam)).sum() - radius for lam in lams]
        assert np.all(np.diff(phi) <= 1e-12)


class TestProxLinf:
    def test_inside_ball_gives_zero(self):
        np.testing.assert_array_equal(prox_linf([0.2, -0.3, 0.1], 1.0), [0, 0, 0])

    def test_example(self):
        np.testing.assert_allclose(prox_linf([3, 0], 1), [2, 0])
        grid = brute_force_prox_check(np.array([3.0, 0.0]), 1.0, 1e-6)
        assert np.max(np.abs(grid - [2, 0])) <= 2e-6

    def test_bad_scale(self):
        with pytest.raises(InvalidArgumentError):
            prox_linf([1.0], 0.0)

    @given(small_vec)
    def test_moreau_unit_scale(self, v):
        total = prox_linf(v, 1.0) + project_l1_ball(v, 1.0).projected
        np.testing.assert_allclose(total, v, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max()))

    @given(small_vec, positive)
    def test_moreau_general_scale(self, v, t):
        total = prox_linf(v, t) + t * project_l1_ball(v / t, 1.0).projected
        np.testing.assert_allclose(total, v, atol=1e-10 * max(1.0, np.abs(v).max()))

    @given(arrays(np.float64, st.integers(1, 3), elements=st.floats(-5, 5)), st.floats(0.1, 5))
    def test_grid_oracle(self, v, t):
        grid = brute_force_prox_check(v, t, 1e-5)
        assert np.max(np.abs(grid - prox_linf(v, t))) < 1e-4

    def test_grid_oracle_rejects_dimension(self):
        with pytest.raises(InvalidArgumentError):
            brute_force_prox_check(np.ones(4), 1.0, 1e-3)


class TestProxAffine:
    def test_fixed_point(self, rng):
        E = rng.standard_normal((3, 7))
        z = rng.standard_normal(7)
        b = E @ z
        np.testing.assert_allclose(prox_affine(z, E, spd_factorize(E @ E.T), b), z, atol=1e-12)

    def test_identity_system(self):
        E = np.eye(2)
        np.testing.assert_allclose(prox_affine([9.0, -4.0], E, spd_factorize(E), [1, 2]), [1, 2])

    def test_orthogonality(self, rng):
        E = rng.standard_normal((3, 7))
        b = E @ rng.standard_normal(7)
        z = rng.standard_normal(7)
        x = prox_affine(z, E, spd_factorize(E @ E.T), b)
        assert np.max(np.abs(E @ x - b)) < 1e-8
        for w in null_space(E).T:
            assert abs(np.dot(z - x, w)) < 1e-10

    def test_dimension_mismatch(self):
        E = np.eye(2)
        with pytest.raises(InvalidArgumentError):
            prox_affine([1.0, 2.0, 3.0], E, spd_factorize(E), [1, 2])

    @given(st.integers(0, 2**31 - 1))
    def test_matches_nullspace_oracle(self, seed):
        g = np.random.default_rng(seed)
        k, d = g.integers(1, 4), g.integers(4, 8)
        E = g.standard_normal((k, d))
        b = g.standard_normal(k)
        z = g.standard_normal(d) * 10
        got = prox_affine(z, E, spd_factorize(E @ E.T), b)
        np.testing.assert_allclose(got, nullspace_affine_projection(z, E, b), atol=1e-8)


class TestNonexpansive:
    @given(small_vec, st.data(), positive)
    def test_all_prox(self, x, data, t):
        y = pair(data, x.size)
        d = np.linalg.norm(x - y)
        slack = 1e-9 * (1 + d + np.abs(x).max() + np.abs(y).max())
        for f in (
            lambda v: soft_threshold(v, t),
            lambda v: project_l1_ball(v, t).projected,
            lambda v: prox_linf(v, t),
        ):
            assert np.linalg.norm(f(x) - f(y)) <= d + slack

    @given(st.integers(0, 2**31 - 1))
    def test_affine(self, seed):
        g = np.random.default_rng(seed)
        E = g.standard_normal((2, 5))
        F = spd_factorize(E @ E.T)
        b = g.standard_normal(2)
        x, y = g.standard_normal((2, 5)) * 5
        assert np.linalg.norm(prox_affine(x, E, F, b) - prox_affine(y, E, F, b)) <= np.linalg.norm(x - y) + 1e-9
