from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from annuitize import kernels

BACKENDS = kernels.backends()


def _direct(x, c, m, v, growth, wg, wk, above):
    d = (np.log(c[None, :] / x[:, None]) - m[None, :]) / v[None, :]
    if above:
        P, Q = ndtr(d), ndtr(d - v)
    else:
        P, Q = ndtr(-d), ndtr(v - d)
    return x * (Q * wg * growth).sum(axis=1) + (P * wk).sum(axis=1)


def _case(rng, n=7, k=11):
    x = rng.uniform(1, 50, n)
    c = rng.uniform(1, 50, k)
    m = rng.normal(0, 0.05, k)
    v = rng.uniform(0.01, 0.5, k)
    return x, c, m, v, rng.uniform(0.9, 1.5, k), rng.normal(size=k), rng.normal(size=k)


def test_cython_backend_built():
    assert "cython" in BACKENDS, "compiled kernels missing; reinstall with Cython available"


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("above", [True, False])
def test_continuation_sum_matches_direct(name, above):
    rng = np.random.default_rng(1)
    x, c, m, v, growth, wg, wk = _case(rng)
    got = BACKENDS[name].continuation_sum(x, c, m, v, growth, wg, wk, above)
    np.testing.assert_allclose(got, _direct(x, c, m, v, growth, wg, wk, above), rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_backends_agree(seed, above):
    if len(BACKENDS) < 2:
        pytest.skip("single backend")
    args = _case(np.random.default_rng(seed))
    a = BACKENDS["cython"].continuation_sum(*args, above)
    b = BACKENDS["python"].continuation_sum(*args, above)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def _obstacle_system(n=60):
    x = np.linspace(0.0, 2.0, n)
    obs = np.maximum(1.0 - x, 0.0)
    lower = np.full(n, -0.3)
    upper = np.full(n, -0.3)
    diag = np.full(n, 1.7)
    rhs = obs + 0.05
    return lower, diag, upper, rhs, obs


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_psor_solves_complementarity(name):
    lower, diag, upper, rhs, obs = _obstacle_system()
    V = obs.copy()
    it = BACKENDS[name].psor(lower, diag, upper, rhs, obs, V, 1.2, 1e-12, 10_000, 0, 0)
    assert it > 0
    assert np.all(V >= obs - 1e-14)
    Av = diag[1:-1] * V[1:-1] + lower[1:-1] * V[:-2] + upper[1:-1] * V[2:]
    resid = Av - rhs[1:-1]
    free = V[1:-1] > obs[1:-1] + 1e-9
    assert np.all(resid >= -1e-9)
    assert np.max(np.abs(resid[free])) < 1e-9


def test_psor_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("single backend")
    out = []
    for name in ("cython", "python"):
        lower, diag, upper, rhs, obs = _obstacle_system()
        V = obs.copy()
        BACKENDS[name].psor(lower, diag, upper, rhs, obs, V, 1.3, 1e-13, 10_000, 1, 0)
        out.append(V)
    np.testing.assert_allclose(out[0], out[1], rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_psor_reports_non_convergence(name):
    lower, diag, upper, rhs, obs = _obstacle_system()
    V = obs.copy()
    assert BACKENDS[name].psor(lower, diag, upper, rhs, obs, V, 1.2, 1e-15, 1, 0, 0) == -1
