# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics match ``_pykernels`` exactly."""

import numpy as np
from libc.math cimport erfc, log, fabs, sqrt

cdef double _RSQRT2 = 0.70710678118654752440


cdef inline double _phi(double z) noexcept nogil:
    return 0.5 * erfc(-z * _RSQRT2)


def continuation_sum(const double[::1] x, const double[::1] c, const double[::1] m,
                     const double[::1] v, const double[::1] growth,
                     const double[::1] wg, const double[::1] wk, bint above):
    cdef Py_ssize_t nx = x.shape[0], nk = c.shape[0], j, k
    cdef double lx, d, acc, xj
    cdef double[::1] logc = np.empty(nk)
    out = np.empty(nx)
    cdef double[::1] o = out
    with nogil:
        for k in range(nk):
            logc[k] = log(c[k])
        for j in range(nx):
            xj = x[j]
            lx = log(xj)
            acc = 0.0
            if above:
                for k in range(nk):
                    d = (logc[k] - lx - m[k]) / v[k]
                    acc += wg[k] * xj * growth[k] * _phi(d - v[k]) + wk[k] * _phi(d)
            else:
                for k in range(nk):
                    d = (logc[k] - lx - m[k]) / v[k]
                    acc += wg[k] * xj * growth[k] * _phi(v[k] - d) + wk[k] * _phi(-d)
            o[j] = acc
    return out


cdef inline void _edge(double[::1] V, const double[::1] obs, Py_ssize_t n, int left, int right) noexcept nogil:
    if left == 0:
        V[0] = obs[0]
    else:
        V[0] = 3.0 * V[1] - 3.0 * V[2] + V[3]
        if V[0] < obs[0]:
            V[0] = obs[0]
    if right == 0:
        V[n - 1] = obs[n - 1]
    else:
        V[n - 1] = 3.0 * V[n - 2] - 3.0 * V[n - 3] + V[n - 4]
        if V[n - 1] < obs[n - 1]:
            V[n - 1] = obs[n - 1]


def psor(const double[::1] lower, const double[::1] diag, const double[::1] upper,
         const double[::1] rhs, const double[::1] obs, double[::1] V,
         double omega, double tol, int max_iter, int left, int right):
    cdef Py_ssize_t n = V.shape[0], i
    cdef int it, done = -1
    cdef double y, new, delta, err, scale
    with nogil:
        for it in range(1, max_iter + 1):
            err = 0.0
            scale = 1.0
            for i in range(1, n - 1):
                y = (rhs[i] - lower[i] * V[i - 1] - upper[i] * V[i + 1]) / diag[i]
                new = V[i] + omega * (y - V[i])
                if new < obs[i]:
                    new = obs[i]
                delta = fabs(new - V[i])
                if delta > err:
                    err = delta
                if fabs(new) > scale:
                    scale = fabs(new)
                V[i] = new
            _edge(V, obs, n, left, right)
            if err <= tol * scale:
                done = it
                break
    return done
