"""Compiled ADMM loop.

Performs the same arithmetic as the NumPy loop in ``admm._iterate`` without the
per-iteration interpreter overhead. The NumPy loop remains the reference and
is used whenever a per-iteration callback is requested.
"""

import math

import numpy as np
from numba import njit

# status codes returned by ``admm_loop``
RUNNING = 0
CONVERGED = 1
NON_FINITE = 2


@njit(cache=True)
def _clip_level(v, t, work):
    # threshold of the radius-t l1-ball projection of |v|; -1 inside the ball
    n = v.size
    total = 0.0
    for i in range(n):
        work[i] = abs(v[i])
        total += work[i]
    if total <= t:
        return -1.0
    # Michelot's fixed point: tau rises monotonically to the exact threshold,
    # dropping entries at or below it, and stops once the active set is stable
    tau = (total - t) / n
    count = n
    while True:
        acc = 0.0
        c = 0
        for i in range(n):
            if work[i] > tau:
                acc += work[i]
                c += 1
        new_tau = (acc - t) / c
        if c == count or new_tau <= tau:
            return max(new_tau, 0.0)
        tau = new_tau
        count = c


@njit(cache=True)
def admm_loop(A, b, P, Pb, t_inf, t_l1, penalized, rho, root_m_abs, rel, max_iters, hist):
    """Run at most ``max_iters`` iterations from zero.

    ``hist[k - 1]`` receives ``(r_norm, s_norm, objective)``. Returns
    ``(y, z, u, k, status, e1, e2, best_y, best_z)``, the last two being the
    iterates with the lowest objective at ``z``.
    """
    n, m = A.shape
    N = n + m
    y = np.zeros(N)
    z = np.zeros(N)
    u = np.zeros(N)
    w = np.empty(N)
    z_new = np.empty(N)
    work = np.empty(n)
    z1 = np.empty(n)
    z2 = np.empty(m)
    best_y = np.zeros(N)
    best_z = np.zeros(N)
    best_obj = np.inf
    lam = t_l1 * rho
    status = RUNNING
    e1 = np.nan
    e2 = np.nan
    k = 0
    for k in range(1, max_iters + 1):
        for i in range(N):
            w[i] = z[i] - u[i]
        theta = _clip_level(w[:n], t_inf, work)
        if theta < 0.0:
            for i in range(n):
                y[i] = 0.0
        else:
            for i in range(n):
                y[i] = min(max(w[i], -theta), theta)
        for i in range(n, N):
            if penalized:
                c = min(max(w[i], -t_l1), t_l1)
                y[i] = w[i] - c
            else:
                y[i] = w[i]

        for i in range(N):
            w[i] = y[i] + u[i]
        np.dot(P, w, z2)
        for j in range(m):
            z2[j] -= Pb[j]
            z_new[n + j] = z2[j]
        np.dot(A, z2, z1)
        for i in range(n):
            z_new[i] = z1[i] + b[i]

        r2 = 0.0
        s2 = 0.0
        yy = 0.0
        zz = 0.0
        uu = 0.0
        zmax = 0.0
        l1 = 0.0
        for i in range(N):
            d = y[i] - z_new[i]
            u[i] += d
            r2 += d * d
            dz = z_new[i] - z[i]
            s2 += dz * dz
            z[i] = z_new[i]
            yy += y[i] * y[i]
            zz += z[i] * z[i]
            uu += u[i] * u[i]
        for i in range(n):
            zmax = max(zmax, abs(z[i]))
        for i in range(n, N):
            l1 += abs(z[i])
        r_norm = math.sqrt(r2)
        s_norm = rho * math.sqrt(s2)
        hist[k - 1, 0] = r_norm
        hist[k - 1, 1] = s_norm
        obj = zmax + lam * l1
        hist[k - 1, 2] = obj
        if not (math.isfinite(r_norm) and math.isfinite(s_norm)):
            status = NON_FINITE
            break
        if obj < best_obj:
            best_obj = obj
            best_y[:] = y
            best_z[:] = z
        e1 = root_m_abs + rel * math.sqrt(max(zz, yy))
        e2 = root_m_abs + rel * rho * math.sqrt(uu)
        if r_norm <= e1 and s_norm <= e2:
            status = CONVERGED
            break
    return y, z, u, k, status, e1, e2, best_y, best_z
