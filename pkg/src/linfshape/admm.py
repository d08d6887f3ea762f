"""ADMM for the l1-penalized l-infinity regression and its support-restricted refit.

The split is

    minimize ||y1||_inf + lam * ||y2||_1   subject to   y1 = A y2 + b

written as ``f1(y1) + f2(y2) + g(z)`` with ``z = y`` and ``g`` the indicator
of ``{z : E z = b}``, ``E = [I, -A]``. The dual variable is kept in scaled
form, ``u <- u + y - z``.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .numerics import SpdFactorization, as_matrix, as_vector, spd_factorize, spd_solve
from .prox import prox_affine

try:
    from . import _kernel
except ImportError:  # pragma: no cover - numba missing
    _kernel = None

_RUNNING, _CONVERGED, _NON_FINITE = 0, 1, 2

__all__ = [
    "AdmmConfig",
    "SplitProblem",
    "AdmmState",
    "AdmmResult",
    "residual_tolerances",
    "solve_penalized",
    "solve_refit",
]


@dataclass(frozen=True)
class AdmmConfig:
    """Solver settings.

    ``abs_tol`` and ``rel_tol`` are the absolute and relative stopping
    tolerances; ``lam`` is the l1 weight (ignored by the refit). With
    ``normalize`` the iteration runs on an equilibrated copy of the problem
    (``max|A| = ||b||_2 = 1``, see ``_equilibrate``), which leaves the
    minimizer unchanged and makes the iterates independent of any constant
    scaling applied to ``A`` and ``b``.
    """

    rho: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-5
    max_iters: int = 250_000
    lam: float = 0.0
    normalize: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")
        if not self.abs_tol > 0:
            raise InvalidArgumentError(f"abs_tol must be positive, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise InvalidArgumentError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.lam >= 0 or not math.isfinite(self.lam):
            raise InvalidArgumentError(f"lam must be finite and nonnegative, got {self.lam}")

    def with_lam(self, lam):
        return AdmmConfig(self.rho, self.abs_tol, self.rel_tol, self.max_iters, lam, self.normalize)


class SplitProblem:
    """The constraint ``y1 = A y2 + b`` of the splitting.

    Immutable after construction. ``E`` and the factorization of ``E E'`` are
    built on first use. The iteration itself projects through the graph form
    ``y2 = (I + A'A)^{-1} (v2 + A'(v1 - b)), y1 = A y2 + b``, which is the
    same projection as ``prox_affine`` with ``E E' = I + A A'`` but factors an
    ``n_coef``-sized matrix instead of an ``n_resid``-sized one.
    """

    def __init__(self, A, b):
        A = as_matrix(A, "A")
        b = as_vector(b, "b")
        if A.shape[0] != b.size:
            raise InvalidArgumentError(f"A has {A.shape[0]} rows but b has length {b.size}")
        self.A = A.copy()
        self.b = b.copy()
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @classmethod
    def from_regression(cls, X, Y):
        """Split problem for ``min ||Y - X beta||_inf + lam ||beta||_1``."""
        return cls(-np.asarray(X, dtype=np.float64), Y)

    @property
    def n_resid(self):
        return self.A.shape[0]

    @property
    def n_coef(self):
        return self.A.shape[1]

    @cached_property
    def E(self):
        return np.hstack([np.eye(self.n_resid), -self.A])

    @cached_property
    def ee_t_factor(self) -> SpdFactorization:
        return spd_factorize(np.eye(self.n_resid) + self.A @ self.A.T)

    @cached_property
    def gram_factor(self) -> SpdFactorization:
        return spd_factorize(np.eye(self.n_coef) + self.A.T @ self.A)

    def restrict(self, support):
        support = _check_support(support, self.n_coef)
        return SplitProblem(self.A[:, support], self.b)

    def scaled(self, c):
        return SplitProblem(c * self.A, c * self.b)

    def residual(self, coef):
        """``A coef + b``, the residual block for a coefficient vector."""
        return self.A @ coef + self.b

    def project(self, v):
        """Euclidean projection of the stacked vector ``v`` onto ``E z = b``."""
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.n_resid + self.n_coef:
            raise InvalidArgumentError("stacked vector has the wrong length")
        if self.n_coef > self.n_resid:
            return prox_affine(v, self.E, self.ee_t_factor, self.b)
        v1, v2 = v[: self.n_resid], v[self.n_resid :]
        z2 = spd_solve(self.gram_factor, v2 + self.A.T @ (v1 - self.b))
        return np.concatenate([self.A @ z2 + self.b, z2])


@dataclass
class AdmmState:
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    n_coef: int
    iter: int = 0


@dataclass
class AdmmResult:
    """Outcome of a solve.

    ``solution`` is the coefficient block of ``z`` (so that the reported
    ``objective`` is attained exactly by a point satisfying the constraint);
    ``coef_prox`` is the coefficient block of ``y``, which carries exact zeros
    from soft thresholding and is what support detection reads. When the
    iteration limit is hit both come from the iterate with the lowest
    objective, while ``state`` always holds the final iterate. Residuals and
    ``state`` are in the units the iteration ran in (see
    ``AdmmConfig.normalize``): the iteration ran on ``y2 / coef_scale`` and
    an objective multiplied by ``row_scale``.
    """

    solution: np.ndarray
    coef_prox: np.ndarray
    converged: bool
    iters_used: int
    primal_residual: float
    dual_residual: float
    objective: float
    residual_history: np.ndarray
    tolerances: tuple
    state: AdmmState
    row_scale: float = 1.0
    coef_scale: float = 1.0
    objective_history: np.ndarray = field(default=None, repr=False)

    def summary(self):
        return {
            "converged": bool(self.converged),
            "iters_used": int(self.iters_used),
            "primal_residual": float(self.primal_residual),
            "dual_residual": float(self.dual_residual),
            "objective": float(self.objective),
        }


def residual_tolerances(state: AdmmState, config: AdmmConfig):
    """Stopping thresholds ``(e1, e2)`` for the current iterate.

    ``e1 = sqrt(m) abs_tol + rel_tol * max(||z||, ||y||)`` and
    ``e2 = sqrt(m) abs_tol + rel_tol * ||rho u||`` with ``m`` the length of the
    coefficient block.
    """
    root_m = math.sqrt(state.n_coef)
    e1 = root_m * config.abs_tol + config.rel_tol * max(
        float(np.linalg.norm(state.z)), float(np.linalg.norm(state.y))
    )
    e2 = root_m * config.abs_tol + config.rel_tol * config.rho * float(np.linalg.norm(state.u))
    return e1, e2


def solve_penalized(problem: SplitProblem, config: AdmmConfig, trace_path=None, callback=None):
    """Minimize ``||A y2 + b||_inf + lam ||y2||_1`` with ADMM.

    ``trace_path`` receives a CSV row ``iter, r_norm, s_norm, objective`` per
    iteration. ``callback(k, y1, y2, z1, z2, u1, u2)`` is invoked after every
    iteration with the (normalized) iterates.
    """
    return _iterate(problem, config, True, trace_path, callback)


def solve_refit(problem: SplitProblem, support, config: AdmmConfig, trace_path=None, callback=None):
    """Minimize ``||A_S y3 + b||_inf`` over the columns in ``support``.

    The coefficient-block prox becomes the identity. The returned coefficient
    vectors have full length ``problem.n_coef`` with zeros off the support.
    """
    support = _check_support(support, problem.n_coef)
    res = _iterate(problem.restrict(support), config, False, trace_path, callback)
    for name in ("solution", "coef_prox"):
        full = np.zeros(problem.n_coef)
        full[support] = getattr(res, name)
        setattr(res, name, full)
    return res


def _check_support(support, n_coef):
    support = np.unique(np.asarray(support, dtype=np.int64).ravel())
    if support.size == 0:
        raise InvalidArgumentError("support is empty")
    if support[0] < 0 or support[-1] >= n_coef:
        raise InvalidArgumentError(f"support indices must lie in [0, {n_coef})")
    return support


def _linf_clip_level(a, t, ranks):
    """Clip level of ``prox_linf`` at scale ``t``, or ``None`` inside the l1 ball.

    Same rule as ``prox._threshold_by_sort``; the active set is a prefix of
    the sorted magnitudes, so its length is a count.
    """
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    css -= t
    if css[-1] <= 0.0:
        return None
    active = np.count_nonzero(u * ranks > css) - 1
    return max(css[active] / (active + 1.0), 0.0)


def _iterate(problem, config, penalized, trace_path, callback):
    A, b, row_scale, coef_scale = _equilibrate(problem, config.normalize)
    A = np.ascontiguousarray(A)
    b = np.ascontiguousarray(b)
    n, m = A.shape
    rho = config.rho
    # lam * ||y2||_1 in the rescaled variables y2 = coef_scale * y2'
    lam = config.lam * row_scale * coef_scale if penalized else 0.0
    consts = dict(
        t_inf=1.0 / rho,
        t_l1=lam / rho,
        penalized=penalized,
        rho=rho,
        root_m_abs=math.sqrt(m) * config.abs_tol,
        rel=config.rel_tol,
        max_iters=int(config.max_iters),
    )

    K_inv = spd_factorize(np.eye(m) + A.T @ A).inverse()
    # z2 = K^{-1} (w2 + A'(w1 - b)) as one product with the stacked w
    P = np.ascontiguousarray(np.hstack([K_inv @ A.T, K_inv]))
    Pb = K_inv @ (A.T @ b)

    hist = np.empty((config.max_iters, 3))
    if callback is None and _kernel is not None:
        loop = _kernel.admm_loop(A, b, P, Pb, hist=hist, **consts)
    else:
        loop = _numpy_loop(A, b, P, Pb, hist, callback, **consts)
    y, z, u, k, status, e1, e2, best_y, best_z = loop
    if status == _NON_FINITE:
        raise NumericalError(f"non-finite iterate at iteration {k}", index=k)
    converged = status == _CONVERGED
    r_norm, s_norm = float(hist[k - 1, 0]), float(hist[k - 1, 1])
    obj_scale = 1.0 / row_scale
    objectives = hist[:k, 2] * obj_scale
    # the reported point: the final iterate if converged, else the best one seen
    out_y, out_z = (y, z) if converged else (best_y, best_z)
    objective = _objective(out_z, n, lam) * obj_scale

    if trace_path is not None:
        _write_trace(trace_path, hist[:k, :2], objectives)

    return AdmmResult(
        # z satisfies the constraint exactly, so its objective is attained
        solution=out_z[n:] * coef_scale,
        coef_prox=out_y[n:] * coef_scale,
        converged=converged,
        iters_used=int(k),
        primal_residual=r_norm,
        dual_residual=s_norm,
        objective=float(objective),
        residual_history=hist[:k, :2].copy(),
        tolerances=(float(e1), float(e2)),
        state=AdmmState(y=y, z=z, u=u, n_coef=m, iter=int(k)),
        row_scale=row_scale,
        coef_scale=coef_scale,
        objective_history=objectives,
    )


def _numpy_loop(A, b, P, Pb, hist, callback, *, t_inf, t_l1, penalized, rho,
                root_m_abs, rel, max_iters):
    n, m = A.shape
    lam = t_l1 * rho
    ranks = np.arange(1.0, n + 1.0)
    y = np.zeros(n + m)
    z = np.zeros(n + m)
    u = np.zeros(n + m)
    w = np.empty(n + m)
    d = np.empty(n + m)
    z_new = np.empty(n + m)
    y1, y2 = y[:n], y[n:]
    best_y = np.zeros(n + m)
    best_z = np.zeros(n + m)
    best_obj = math.inf
    status = _RUNNING
    e1 = e2 = math.nan
    k = 0

    for k in range(1, max_iters + 1):
        np.subtract(z, u, out=w)
        v1 = w[:n]
        theta = _linf_clip_level(np.abs(v1), t_inf, ranks)
        if theta is None:
            y1.fill(0.0)
        else:
            np.clip(v1, -theta, theta, out=y1)
        v2 = w[n:]
        if penalized:
            # soft threshold as v - clip(v, -t, t)
            np.clip(v2, -t_l1, t_l1, out=y2)
            np.subtract(v2, y2, out=y2)
        else:
            y2[:] = v2

        np.add(y, u, out=w)
        z2 = z_new[n:]
        np.matmul(P, w, out=z2)
        z2 -= Pb
        np.matmul(A, z2, out=z_new[:n])
        z_new[:n] += b

        np.subtract(y, z_new, out=d)
        u += d
        r_norm = math.sqrt(d @ d)
        np.subtract(z_new, z, out=d)
        s_norm = rho * math.sqrt(d @ d)
        z, z_new = z_new, z

        obj = _objective(z, n, lam)
        hist[k - 1] = r_norm, s_norm, obj
        if not (math.isfinite(r_norm) and math.isfinite(s_norm)):
            status = _NON_FINITE
            break
        if obj < best_obj:
            best_obj = obj
            best_y[:] = y
            best_z[:] = z
        if callback is not None:
            callback(k, y[:n], y[n:], z[:n], z[n:], u[:n], u[n:])

        e1 = root_m_abs + rel * math.sqrt(max(z @ z, y @ y))
        e2 = root_m_abs + rel * rho * math.sqrt(u @ u)
        if r_norm <= e1 and s_norm <= e2:
            status = _CONVERGED
            break
    return y, z, u, k, status, e1, e2, best_y, best_z


def _objective(z, n, lam):
    return float(np.max(np.abs(z[:n]))) + lam * float(np.sum(np.abs(z[n:])))


def _equilibrate(problem, normalize):
    """Row and coefficient scalings with ``||b'||_2 = 1`` and ``max|A'| = 1``.

    ``||A y + b||_inf + lam ||y||_1`` divided by ``row_scale`` becomes
    ``||A' y' + b'||_inf + lam * row_scale * coef_scale * ||y'||_1`` with
    ``A' = row_scale * coef_scale * A``, ``b' = row_scale * b`` and
    ``y = coef_scale * y'``. The minimizer is unchanged. Scaling ``b`` by its
    Euclidean norm keeps the residual block comparable in size to the scaled
    dual of the l-infinity term, whose l1 norm is at most one.
    """
    A, b = problem.A, problem.b
    if not normalize:
        return A, b, 1.0, 1.0
    a_max = float(np.max(np.abs(A))) if A.size else 0.0
    b_ref = float(np.linalg.norm(b))
    if a_max == 0.0 and b_ref == 0.0:
        return A, b, 1.0, 1.0
    if b_ref == 0.0:
        return A / a_max, b, 1.0, 1.0 / a_max
    if a_max == 0.0:
        return A, b / b_ref, 1.0 / b_ref, 1.0
    row_scale = 1.0 / b_ref
    coef_scale = b_ref / a_max
    return A / a_max, b / b_ref, row_scale, coef_scale


def _write_trace(path, residuals, objectives):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "r_norm", "s_norm", "objective"])
            for i, ((r, s), obj) in enumerate(zip(residuals, objectives), start=1):
                writer.writerow([i, repr(float(r)), repr(float(s)), repr(float(obj))])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
