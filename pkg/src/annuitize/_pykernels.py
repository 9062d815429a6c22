"""Pure numpy/Python versions of the compiled kernels."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr


def continuation_sum(x, c, m, v, growth, wg, wk, above):
    """Sum over horizons of ``wg x growth Phi(.) + wk Phi(.)`` on the continuation side.

    For ``above`` (stopping above ``c``) the continuation side is
    ``X <= c``; otherwise it is ``X > c``.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (np.log(c)[None, :] - np.log(x)[:, None] - m[None, :]) / v[None, :]
    if above:
        P, Q = ndtr(d), ndtr(d - v)
    else:
        P, Q = ndtr(-d), ndtr(v - d)
    return x * (Q @ (wg * growth)) + P @ wk


def _edge(V, obs, left, right):
    n = len(V)
    if left == 0:
        V[0] = obs[0]
    else:
        V[0] = max(3.0 * V[1] - 3.0 * V[2] + V[3], obs[0])
    if right == 0:
        V[n - 1] = obs[n - 1]
    else:
        V[n - 1] = max(3.0 * V[n - 2] - 3.0 * V[n - 3] + V[n - 4], obs[n - 1])


def psor(lower, diag, upper, rhs, obs, V, omega, tol, max_iter, left, right):
    """Projected SOR for a tridiagonal obstacle problem, in place on ``V``.

    Returns the iteration count, or -1 without convergence.
    """
    n = len(V)
    lo, di, up, b, ob = (list(map(float, a)) for a in (lower, diag, upper, rhs, obs))
    v = list(map(float, V))
    for it in range(1, max_iter + 1):
        err = 0.0
        scale = 1.0
        for i in range(1, n - 1):
            y = (b[i] - lo[i] * v[i - 1] - up[i] * v[i + 1]) / di[i]
            new = v[i] + omega * (y - v[i])
            if new < ob[i]:
                new = ob[i]
            delta = abs(new - v[i])
            if delta > err:
                err = delta
            if abs(new) > scale:
                scale = abs(new)
            v[i] = new
        _edge(v, ob, left, right)
        if err <= tol * scale:
            V[:] = v
            return it
    V[:] = v
    return -1
