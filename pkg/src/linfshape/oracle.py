"""Slow, independent reference solvers used to check the production code.

Nothing here shares code with the ADMM path: the linear programs go through a
dense two-phase tableau simplex, the penalized objective is minimized by
subgradient descent, and the proximal maps are checked against grid search
and exhaustive enumeration. All of it is meant for small instances only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import null_space

from .errors import FeasibilityError, InvalidArgumentError, NumericalError
from .numerics import as_matrix, as_vector

__all__ = [
    "LpStandardForm",
    "LpResult",
    "simplex",
    "constrained_recast",
    "minimax_recast",
    "lp_solve_constrained",
    "lp_solve_minimax",
    "penalized_objective",
    "subgradient_solve",
    "brute_force_prox_check",
    "enumerate_soft_threshold",
    "enumerate_l1_ball_projection",
    "nullspace_affine_projection",
]

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10


@dataclass(frozen=True)
class LpStandardForm:
    """``min c'x`` subject to ``A x = b`` and ``lower <= x`` (upper bounds are infinite).

    Only ``lower = 0`` is supported by :func:`simplex`; free variables are
    split into positive and negative parts by the recast builders.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray = None

    def __post_init__(self):
        c = as_vector(self.c, "c")
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape != (b.size, c.size):
            raise InvalidArgumentError(
                f"inconsistent LP dimensions: A {A.shape}, b {b.size}, c {c.size}"
            )
        lower = np.zeros(c.size) if self.lower is None else as_vector(self.lower, "lower")
        if lower.size != c.size:
            raise InvalidArgumentError("lower bounds must match the number of variables")
        if np.any(lower != 0.0):
            raise InvalidArgumentError("only zero lower bounds are supported")
        for name, arr in (("c", c), ("A", A), ("b", b), ("lower", lower)):
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    objective: float
    reduced_costs: np.ndarray
    basis: tuple
    pivots: int

    def kkt_violation(self, lp: LpStandardForm):
        """``(most negative reduced cost, primal infeasibility)`` at ``x``."""
        primal = max(
            float(np.max(np.abs(lp.A @ self.x - lp.b), initial=0.0)),
            float(np.max(-self.x, initial=0.0)),
        )
        return float(np.min(self.reduced_costs, initial=0.0)), primal


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run_bland(T, basis, n_cols, max_pivots, counter):
    """Minimize with the last row of ``T`` as the reduced-cost row.

    Bland's rule: the entering column is the lowest-index one with a negative
    reduced cost, ties in the ratio test go to the lowest-index basic variable.
    """
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :n_cols]
        candidates = np.flatnonzero(cost < -_COST_TOL)
        if candidates.size == 0:
            return
        col = int(candidates[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            raise NumericalError("linear program is unbounded", index=col)
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        counter[0] += 1
        if counter[0] > max_pivots:
            raise NumericalError("simplex pivot limit reached", index=counter[0])


def simplex(lp: LpStandardForm, max_pivots=100_000) -> LpResult:
    """Two-phase dense tableau simplex.

    Phase one minimizes the sum of artificial variables; if it cannot reach
    zero the program is infeasible and :class:`FeasibilityError` is raised
    with the residual infeasibility. Phase two starts from the resulting
    basis with the true costs.
    """
    A = lp.A.copy()
    b = lp.b.copy()
    c = lp.c
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # tableau columns: structural, artificial, rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    counter = [0]
    _run_bland(T, basis, n + m, max_pivots, counter)

    infeasibility = -T[-1, -1]
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if infeasibility > 1e-9 * scale:
        raise FeasibilityError(
            f"no point satisfies the constraints (phase-one residual {infeasibility:.3e})"
        )

    # push remaining artificials out of the basis; rows where that is
    # impossible are redundant and dropped
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cols = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
            if cols.size:
                _pivot(T, r, int(cols[0]))
                basis[r] = int(cols[0])
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [T.shape[1] - 1]], np.zeros(n + 1)])
    basis = [basis[r] for r in keep]
    T[-1, :n] = c
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    _run_bland(T, basis, n, max_pivots, counter)

    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    return LpResult(
        x=x,
        objective=float(c @ x),
        reduced_costs=T[-1, :n].copy(),
        basis=tuple(basis),
        pivots=counter[0],
    )


def constrained_recast(X, Y, lambda0) -> LpStandardForm:
    """Standard form of ``min ||beta||_1`` s.t. ``(1/sqrt n) ||Y - X beta||_inf <= lambda0``.

    Variables ``[beta+, beta-, gamma, slacks]`` with ``-gamma <= beta <= gamma``
    and ``||beta||_1`` replaced by ``sum(gamma)``.
    """
    X = as_matrix(X, "X")
    Y = as_vector(Y, "Y")
    n, p = X.shape
    if Y.size != n:
        raise InvalidArgumentError(f"X has {n} rows but Y has length {Y.size}")
    if not lambda0 > 0:
        raise InvalidArgumentError(f"lambda0 must be positive, got {lambda0}")
    tau = math.sqrt(n) * lambda0
    I = np.eye(p)
    rows = np.block([
        [I, -I, -I],     # beta - gamma <= 0
        [-I, I, -I],     # -beta - gamma <= 0
        [-X, X, np.zeros((n, p))],  # Y - X beta <= tau
        [X, -X, np.zeros((n, p))],  # X beta - Y <= tau
    ])
    n_rows = rows.shape[0]
    A = np.hstack([rows, np.eye(n_rows)])
    b = np.concatenate([np.zeros(2 * p), tau - Y, tau + Y])
    c = np.concatenate([np.zeros(2 * p), np.ones(p), np.zeros(n_rows)])
    return LpStandardForm(c=c, A=A, b=b)


def minimax_recast(X, Y) -> LpStandardForm:
    """Standard form of ``min_beta ||Y - X beta||_inf``; variables ``[beta+, beta-, t, slacks]``."""
    X = as_matrix(X, "X")
    Y = as_vector(Y, "Y")
    n, p = X.shape
    if Y.size != n:
        raise InvalidArgumentError(f"X has {n} rows but Y has length {Y.size}")
    ones = np.ones((n, 1))
    rows = np.block([
        [-X, X, -ones],  # Y - X beta <= t
        [X, -X, -ones],  # X beta - Y <= t
    ])
    A = np.hstack([rows, np.eye(2 * n)])
    b = np.concatenate([-Y, Y])
    c = np.zeros(A.shape[1])
    c[2 * p] = 1.0
    return LpStandardForm(c=c, A=A, b=b)


def lp_solve_constrained(X, Y, lambda0):
    """Minimum-l1 ``beta`` with ``(1/sqrt n) ||Y - X beta||_inf <= lambda0``.

    Raises :class:`FeasibilityError` when ``lambda0`` is below the best
    achievable scaled residual, reporting both values.
    """
    lp = constrained_recast(X, Y, lambda0)
    try:
        res = simplex(lp)
    except FeasibilityError:
        X = np.asarray(X, dtype=np.float64)
        best = lp_solve_minimax(X, Y, return_objective=True)[1] / math.sqrt(X.shape[0])
        raise FeasibilityError(
            f"constraint scale lambda0={lambda0:.6g} is below the smallest attainable "
            f"(1/sqrt n)||Y - X beta||_inf = {best:.6g}"
        ) from None
    p = np.asarray(X).shape[1]
    return res.x[:p] - res.x[p : 2 * p]


def lp_solve_minimax(X, Y, return_objective=False):
    """Chebyshev fit ``argmin ||Y - X beta||_inf`` by the simplex."""
    lp = minimax_recast(X, Y)
    res = simplex(lp)
    p = np.asarray(X).shape[1]
    beta = res.x[:p] - res.x[p : 2 * p]
    if return_objective:
        return beta, res.objective
    return beta


def penalized_objective(X, Y, beta, lam):
    return float(np.max(np.abs(Y - X @ beta), initial=0.0) + lam * np.sum(np.abs(beta)))


def subgradient_solve(X, Y, lam, iters, epoch=500, decay=0.7, return_info=False):
    """Subgradient descent on ``||Y - X beta||_inf + lam ||beta||_1`` from ``beta = 0``.

    Normalized steps shrink geometrically from one epoch of ``epoch``
    iterations to the next, and every epoch restarts at the best point seen so
    far. The best iterate is returned. With ``return_info`` a dict with the
    best objective and a gap estimate (the improvement over the final epoch)
    is returned as well.
    """
    X = as_matrix(X, "X")
    Y = as_vector(Y, "Y")
    if iters < 1:
        raise InvalidArgumentError("iters must be at least 1")
    if lam < 0:
        raise InvalidArgumentError("lam must be nonnegative")
    n, p = X.shape
    beta = np.zeros(p)
    best_beta = beta.copy()
    best = penalized_objective(X, Y, beta, lam)
    info = {"objective": best, "gap_estimate": 0.0, "iters": 0}
    x_max = float(np.max(np.abs(X), initial=0.0))
    if x_max == 0.0:
        return (best_beta, info) if return_info else best_beta

    # initial step: the scale of a coefficient that could cancel ||Y||_inf
    step = max(float(np.max(np.abs(Y), initial=0.0)), 1e-12) / x_max
    k = 0
    epoch_start_best = best
    while k < iters:
        epoch_start_best = best
        best, best_beta, used = _subgradient_epoch(
            X, Y, float(lam), best_beta, best, step, min(epoch, iters - k)
        )
        k += used
        step *= decay
    info = {"objective": best, "gap_estimate": epoch_start_best - best, "iters": k}
    return (best_beta, info) if return_info else best_beta


@njit(cache=True)
def _subgradient_epoch(X, Y, lam, start, best, step, count):
    # up to ``count`` normalized steps from ``start``; returns the best point
    # seen (or ``start`` if none beats ``best``) and the number of steps taken
    n, p = X.shape
    beta = start.copy()
    best_beta = start.copy()
    g = np.empty(p)
    used = 0
    for _ in range(count):
        used += 1
        imax = 0
        rmax = -1.0
        r_sign = 0.0
        for i in range(n):
            s = Y[i]
            for j in range(p):
                s -= X[i, j] * beta[j]
            if abs(s) > rmax:
                rmax = abs(s)
                imax = i
                r_sign = np.sign(s)
        norm = 0.0
        for j in range(p):
            g[j] = -r_sign * X[imax, j] + lam * np.sign(beta[j])
            norm += g[j] * g[j]
        norm = math.sqrt(norm)
        if norm == 0.0:
            break
        for j in range(p):
            beta[j] -= step / norm * g[j]
        f = 0.0
        for i in range(n):
            s = Y[i]
            for j in range(p):
                s -= X[i, j] * beta[j]
            f = max(f, abs(s))
        for j in range(p):
            f += lam * abs(beta[j])
        if f < best:
            best = f
            best_beta[:] = beta
    return best, best_beta, used


def _prox_linf_objective(points, v, t):
    return t * np.max(np.abs(points), axis=-1) + 0.5 * np.sum((points - v) ** 2, axis=-1)


def brute_force_prox_check(v, t, grid_step, points_per_level=25, window=4.0):
    """Grid minimizer of ``t ||u||_inf + 0.5 ||u - v||^2`` for ``dim(v) <= 3``.

    The first grid covers ``[-1.5 ||v||_inf, 1.5 ||v||_inf]`` in each
    coordinate. Each later level recentres on the current grid argmin with a
    half-width of ``window`` old steps and a finer step, until the step is at
    most ``grid_step``.
    """
    v = as_vector(v, "v")
    if not 1 <= v.size <= 3:
        raise InvalidArgumentError(f"grid check supports dimension 1..3, got {v.size}")
    if not (t > 0 and grid_step > 0):
        raise InvalidArgumentError("t and grid_step must be positive")
    d = v.size
    half = max(1.5 * float(np.max(np.abs(v))), grid_step)
    centre = np.zeros(d)
    while True:
        axis = np.linspace(-half, half, points_per_level)
        step = axis[1] - axis[0]
        mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        points = centre + mesh
        best = points[int(np.argmin(_prox_linf_objective(points, v, t)))]
        if step <= grid_step:
            return best
        centre = best
        half = window * step


def enumerate_soft_threshold(v, t):
    """Coordinatewise minimizer of ``t |u| + 0.5 (u - v)^2`` over the candidates
    ``{0, v - t, v + t}``, which contain the minimizer of each smooth piece."""
    v = as_vector(v, "v")
    cand = np.stack([np.zeros_like(v), v - t, v + t])
    vals = t * np.abs(cand) + 0.5 * (cand - v) ** 2
    return cand[np.argmin(vals, axis=0), np.arange(v.size)]


def enumerate_l1_ball_projection(v, radius=1.0):
    """Projection onto ``{x : ||x||_1 <= radius}`` by enumerating faces.

    Candidates are ``v`` itself and, for every support ``S`` and sign
    pattern ``s``, the projection of ``v`` onto ``{x_S : s' x_S = radius,
    x_{S^c} = 0}``. The closest candidate that lies in the ball and respects
    its sign pattern is returned. Exponential in ``dim(v)``.
    """
    v = as_vector(v, "v")
    if v.size > 8:
        raise InvalidArgumentError("enumeration is limited to dimension 8")
    if np.abs(v).sum() <= radius:
        return v.copy()
    d = v.size
    best, best_dist = None, math.inf
    for k in range(1, d + 1):
        for S in itertools.combinations(range(d), k):
            S = list(S)
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                s = np.asarray(signs)
                xs = v[S] - (s @ v[S] - radius) / k * s
                if np.any(s * xs < -1e-12):
                    continue
                x = np.zeros(d)
                x[S] = xs
                dist = float(np.sum((x - v) ** 2))
                if dist < best_dist:
                    best, best_dist = x, dist
    return best


def nullspace_affine_projection(z, E, b):
    """Projection of ``z`` onto ``{x : E x = b}`` through a null-space basis of ``E``."""
    z = as_vector(z, "z")
    E = as_matrix(E, "E")
    b = as_vector(b, "b")
    x0 = np.linalg.lstsq(E, b, rcond=None)[0]
    N = null_space(E)
    if N.size == 0:
        return x0
    return x0 + N @ (N.T @ (z - x0))
