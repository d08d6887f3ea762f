"""Student-t tail probabilities and the one-sample right-tailed t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["betainc_reg", "student_t_sf", "TTestResult", "t_test_greater"]

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a, b, x, max_iter=500):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise InvalidArgumentError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t, df):
    """``P(T > t)`` for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise InvalidArgumentError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc_reg(0.5 * df, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


@dataclass(frozen=True)
class TTestResult:
    mean: float
    std: float
    t_statistic: float
    p_value: float
    n: int
    degenerate: bool = False


def t_test_greater(samples):
    """One-sample t-test of ``mean > 0``.

    With zero sample variance the decision is forced: p is 0, 0.5 or 1 as the
    mean is positive, zero or negative, and ``degenerate`` is set.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 2:
        raise InvalidArgumentError("need at least two samples")
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    if std == 0.0:
        p = 0.0 if mean > 0 else (1.0 if mean < 0 else 0.5)
        t = math.copysign(math.inf, mean) if mean else 0.0
        return TTestResult(mean, std, t, p, n, degenerate=True)
    t = mean / (std / math.sqrt(n))
    return TTestResult(mean, std, t, student_t_sf(t, n - 1), n)
