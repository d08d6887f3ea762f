"""Closed-form proximal operators used by the ADMM splitting.

``prox_f(x) = argmin_u f(u) + 0.5 * ||u - x||_2^2``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .numerics import SpdFactorization, spd_solve

__all__ = [
    "L1BallProjectionResult",
    "soft_threshold",
    "project_l1_ball",
    "prox_linf",
    "prox_affine",
]


@dataclass(frozen=True)
class L1BallProjectionResult:
    projected: np.ndarray
    lambda_star: float


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``, the prox of ``t * ||.||_1``."""
    if t < 0:
        raise InvalidArgumentError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_l1_ball(v, radius=1.0, method="sort", tol=1e-14, max_iter=200):
    """Euclidean projection of ``v`` onto ``{x : ||x||_1 <= radius}``.

    Outside the ball the projection is ``soft_threshold(v, lam)`` where ``lam``
    is the root of ``phi(lam) = ||soft_threshold(v, lam)||_1 - radius``.

    Parameters
    ----------
    method : {"sort", "bisect"}
        ``"sort"`` finds ``lam`` exactly from the sorted magnitudes.
        ``"bisect"`` brackets the root of ``phi`` and is kept for
        cross-checking.
    """
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}")
    if method not in ("sort", "bisect"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    v = np.asarray(v, dtype=np.float64)
    a = np.abs(v)
    if a.sum() <= radius:
        return L1BallProjectionResult(projected=v.copy(), lambda_star=0.0)

    if method == "sort":
        lam = _threshold_by_sort(a, radius)
    else:
        lam = _threshold_by_bisection(a, radius, tol, max_iter)
    return L1BallProjectionResult(projected=soft_threshold(v, lam), lambda_star=float(lam))


def _threshold_by_sort(a, radius):
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, u.size + 1)
    # largest k with u_k > (sum_{i<=k} u_i - radius) / k
    active = np.nonzero(u * k > css)[0][-1]
    return max(css[active] / (active + 1.0), 0.0)


def _threshold_by_bisection(a, radius, tol, max_iter):
    lo, hi = 0.0, float(a.max())
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.maximum(a - mid, 0.0).sum() > radius:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def prox_linf(v, t=1.0):
    """Prox of ``t * ||.||_inf`` via the Moreau decomposition.

    ``prox(v) = v - t * P(v / t)`` with ``P`` the projection onto the unit
    l1 ball. Since ``t * P(v / t) = soft_threshold(v, theta)`` for the
    threshold ``theta`` of the radius-``t`` ball, the difference is evaluated
    as ``clip(v, -theta, theta)``.
    """
    if not t > 0:
        raise InvalidArgumentError(f"scale must be positive, got {t}")
    v = np.asarray(v, dtype=np.float64)
    a = np.abs(v)
    if a.sum() <= t:
        return np.zeros_like(v)
    theta = _threshold_by_sort(a, t)
    return np.clip(v, -theta, theta)


def prox_affine(z, E, factor: SpdFactorization, b):
    """Projection of ``z`` onto ``{x : E x = b}``.

    ``factor`` must factor ``E @ E.T``.
    """
    z = np.asarray(z, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != b.size or E.shape[1] != z.size:
        raise InvalidArgumentError(
            f"dimension mismatch: E {E.shape}, z {z.shape}, b {b.shape}"
        )
    if factor.dimension != E.shape[0]:
        raise InvalidArgumentError("factorization does not match E @ E.T")
    return z - E.T @ spd_solve(factor, E @ z - b)
