import math

import numpy as np
import pytest

from linfshape import admm
from linfshape.admm import (
    AdmmConfig,
    AdmmState,
    SplitProblem,
    residual_tolerances,
    solve_penalized,
    solve_refit,
)
from linfshape.errors import InvalidArgumentError
from linfshape.oracle import lp_solve_minimax, penalized_objective, subgradient_solve

TIGHT = AdmmConfig(abs_tol=1e-9, rel_tol=1e-9, max_iters=200_000)


def random_instance(rng, n=20, p=8):
    X = rng.standard_normal((n, p))
    Y = X @ (rng.standard_normal(p) * (rng.random(p) < 0.5)) + 0.3 * rng.standard_normal(n)
    return X, Y


def record_iterates(store):
    def cb(k, y1, y2, z1, z2, u1, u2):
        store.append((z1.copy(), z2.copy()))
    return cb


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(rho=0), dict(abs_tol=0), dict(rel_tol=-1), dict(max_iters=0), dict(lam=-1)]
    )
    def test_rejects(self, kw):
        with pytest.raises(InvalidArgumentError):
            AdmmConfig(**kw)

    def test_defaults(self):
        c = AdmmConfig()
        assert (c.rho, c.abs_tol, c.rel_tol) == (1.0, 1e-6, 1e-5)


class TestSplitProblem:
    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            SplitProblem(np.ones((3, 2)), np.ones(4))

    def test_immutable(self):
        sp = SplitProblem(np.ones((3, 2)), np.ones(3))
        with pytest.raises(ValueError):
            sp.A[0, 0] = 5.0

    def test_ee_t(self, rng):
        sp = SplitProblem(rng.standard_normal((5, 3)), rng.standard_normal(5))
        assert sp.E.shape == (5, 8)
        L = sp.ee_t_factor.lower
        np.testing.assert_allclose(L @ L.T, np.eye(5) + sp.A @ sp.A.T, atol=1e-12)

    @pytest.mark.parametrize("shape", [(6, 3), (3, 6)])
    def test_projection_routes_agree(self, rng, shape):
        sp = SplitProblem(rng.standard_normal(shape), rng.standard_normal(shape[0]))
        v = rng.standard_normal(sum(shape))
        from linfshape.prox import prox_affine

        np.testing.assert_allclose(sp.project(v), prox_affine(v, sp.E, sp.ee_t_factor, sp.b), atol=1e-10)


class TestTolerances:
    def test_zero_state(self):
        s = AdmmState(y=np.zeros(40), z=np.zeros(40), u=np.zeros(40), n_coef=36)
        e1, e2 = residual_tolerances(s, AdmmConfig())
        assert e1 == pytest.approx(6e-6) and e2 == pytest.approx(6e-6)

    def test_zero_relative_part(self, rng):
        s = AdmmState(*(rng.standard_normal(10) for _ in range(3)), n_coef=4)
        e1, e2 = residual_tolerances(s, AdmmConfig(rel_tol=1e-300))
        assert e1 == pytest.approx(2e-6) and e2 == pytest.approx(2e-6)

    def test_u_doubling(self, rng):
        y, z, u = (rng.standard_normal(10) for _ in range(3))
        cfg = AdmmConfig(rho=2.0)
        base = math.sqrt(4) * cfg.abs_tol
        e1a, e2a = residual_tolerances(AdmmState(y, z, u, 4), cfg)
        e1b, e2b = residual_tolerances(AdmmState(y, z, 2 * u, 4), cfg)
        assert e1a == e1b
        assert e2b - base == pytest.approx(2 * (e2a - base), rel=1e-12)


class TestPenalized:
    def test_zero_problem(self):
        res = solve_penalized(SplitProblem(np.zeros((4, 3)), np.zeros(4)), AdmmConfig(lam=0.5))
        assert res.converged and res.iters_used <= 3
        np.testing.assert_array_equal(res.solution, 0.0)

    def test_above_threshold_gives_zero(self, rng):
        X, Y = random_instance(rng)
        lam = (1 + 1e-6) * np.max(np.abs(X))
        # the objective grows only like 1e-6 * max|X| * ||beta||_1 away from zero,
        # so the stopping rule has to resolve that margin
        cfg = AdmmConfig(abs_tol=1e-10, rel_tol=1e-10, max_iters=10**6, lam=lam)
        res = solve_penalized(SplitProblem.from_regression(X, Y), cfg)
        assert res.converged
        np.testing.assert_array_equal(res.coef_prox, 0.0)
        assert np.max(np.abs(res.solution)) <= 1e-8

    def test_matches_subgradient(self, rng):
        X, Y = random_instance(rng)
        lam = 0.1 * np.max(np.abs(X))
        res = solve_penalized(SplitProblem.from_regression(X, Y), TIGHT.with_lam(lam))
        beta = subgradient_solve(X, Y, lam, 20_000)
        ref = penalized_objective(X, Y, beta, lam)
        assert res.converged
        assert res.objective == pytest.approx(penalized_objective(X, Y, res.solution, lam), rel=1e-12)
        assert abs(res.objective - ref) <= 1e-4 * ref
        # the subgradient value is an upper bound on the optimum
        assert res.objective <= ref * (1 + 1e-9)

    def test_kernel_matches_reference_loop(self, rng):
        if admm._kernel is None:
            pytest.skip("compiled kernel unavailable")
        X, Y = random_instance(rng, 30, 10)
        sp = SplitProblem.from_regression(X, Y)
        cfg = AdmmConfig(lam=0.05 * np.max(np.abs(X)))
        fast = solve_penalized(sp, cfg)
        slow = solve_penalized(sp, cfg, callback=lambda *a: None)
        assert fast.iters_used == slow.iters_used
        np.testing.assert_allclose(fast.solution, slow.solution, atol=1e-9)
        np.testing.assert_allclose(fast.residual_history, slow.residual_history, rtol=1e-6, atol=1e-14)

    def test_affine_constraint_every_iterate(self, rng):
        X, Y = random_instance(rng)
        sp = SplitProblem.from_regression(X, Y)
        seen = []
        res = solve_penalized(sp, AdmmConfig(lam=0.2), callback=record_iterates(seen))
        assert len(seen) == res.iters_used
        A = sp.A * res.row_scale * res.coef_scale
        b = sp.b * res.row_scale
        for z1, z2 in seen:
            assert np.max(np.abs(z1 - A @ z2 - b)) <= 1e-8

    def test_scaling_invariance(self, rng):
        X, Y = random_instance(rng)
        lam = 0.1 * np.max(np.abs(X))
        base = solve_penalized(SplitProblem.from_regression(X, Y), TIGHT.with_lam(lam))
        for c in (1e-3, 7.0, 1e7):
            res = solve_penalized(SplitProblem.from_regression(c * X, c * Y), TIGHT.with_lam(c * lam))
            np.testing.assert_allclose(res.solution, base.solution, atol=1e-6)
            assert res.objective == pytest.approx(c * base.objective, rel=1e-6)

    def test_scaling_invariance_without_normalization(self, rng):
        X, Y = random_instance(rng)
        lam = 0.1 * np.max(np.abs(X))
        cfg = AdmmConfig(abs_tol=1e-10, rel_tol=1e-10, max_iters=200_000, normalize=False)
        base = solve_penalized(SplitProblem.from_regression(X, Y), cfg.with_lam(lam))
        res = solve_penalized(SplitProblem.from_regression(3 * X, 3 * Y), cfg.with_lam(3 * lam))
        np.testing.assert_allclose(res.solution, base.solution, atol=1e-6)

    def test_iteration_limit_returns_best(self, rng):
        X, Y = random_instance(rng)
        res = solve_penalized(SplitProblem.from_regression(X, Y), AdmmConfig(lam=0.1, max_iters=7))
        assert not res.converged and res.iters_used == 7
        assert res.objective == pytest.approx(res.objective_history.min(), rel=1e-12)
        assert res.state.iter == 7

    def test_convergence_meets_tolerances(self, rng):
        X, Y = random_instance(rng)
        cfg = AdmmConfig(lam=0.3)
        res = solve_penalized(SplitProblem.from_regression(X, Y), cfg)
        assert res.converged
        e1, e2 = residual_tolerances(res.state, cfg)
        assert res.tolerances == pytest.approx((e1, e2), rel=1e-12)
        assert res.primal_residual <= e1 and res.dual_residual <= e2

    def test_trace(self, tmp_path, rng):
        X, Y = random_instance(rng)
        path = tmp_path / "trace.csv"
        res = solve_penalized(SplitProblem.from_regression(X, Y), AdmmConfig(lam=0.3), trace_path=path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,r_norm,s_norm,objective"
        assert len(lines) == res.iters_used + 1
        last = [float(v) for v in lines[-1].split(",")]
        assert last[0] == res.iters_used
        assert last[1] == res.primal_residual and last[2] == res.dual_residual


class TestRefit:
    def test_b_zero(self, rng):
        sp = SplitProblem(rng.standard_normal((6, 3)), np.zeros(6))
        res = solve_refit(sp, [0, 1, 2], AdmmConfig())
        np.testing.assert_allclose(res.solution, 0.0, atol=1e-12)
        assert res.objective == pytest.approx(0.0, abs=1e-12)

    def test_exactly_solvable(self):
        A = np.zeros((4, 3))
        A[0, 0] = 1.0
        b = np.array([-1.0, 0, 0, 0])
        res = solve_refit(SplitProblem(A, b), [0], TIGHT)
        assert res.solution[0] == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_array_equal(res.solution[1:], 0.0)
        assert res.objective == pytest.approx(0.0, abs=1e-6)

    def test_matches_lp(self, rng):
        X, Y = random_instance(rng, 20, 8)
        S = [0, 2, 3, 5, 7]
        res = solve_refit(SplitProblem.from_regression(X, Y), S, TIGHT)
        _, ref = lp_solve_minimax(X[:, S], Y, return_objective=True)
        assert abs(res.objective - ref) <= 1e-4 * ref
        off = np.setdiff1d(np.arange(8), S)
        np.testing.assert_array_equal(res.solution[off], 0.0)

    @pytest.mark.parametrize("support", [[], [8], [-1]])
    def test_bad_support(self, rng, support):
        sp = SplitProblem(rng.standard_normal((5, 8)), rng.standard_normal(5))
        with pytest.raises(InvalidArgumentError):
            solve_refit(sp, support, AdmmConfig())

    def test_affine_constraint_every_iterate(self, rng):
        X, Y = random_instance(rng)
        sp = SplitProblem.from_regression(X, Y)
        seen = []
        cfg = AdmmConfig(normalize=False)
        solve_refit(sp, [1, 4], cfg, callback=record_iterates(seen))
        A = sp.A[:, [1, 4]]
        for z1, z2 in seen:
            assert np.max(np.abs(z1 - A @ z2 - sp.b)) <= 1e-8
