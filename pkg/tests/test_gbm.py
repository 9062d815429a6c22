from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annuitize import gbm
from annuitize.coeffs import ProblemConfig

CFG = ProblemConfig()

# E[X_s 1{X_s <= c}] and E[X_s 1{X_s > c}] by quadrature over the normal density
TRUNCATED_REF = [
    (10.0, 1.0, 12.0, 9.624339443997101, 0.4761622268445802),
    (50.0, 5.0, 40.0, 4.7943414447894535, 47.76921337401175),
    (4.0, 20.0, 6.0, 2.898225568545267, 1.987385464095412),
]


@pytest.mark.parametrize("x,s,c,below,above", TRUNCATED_REF)
def test_truncated_moments_reference(x, s, c, below, above):
    assert gbm.partial_mean_below(CFG, x, s, c) == pytest.approx(below, rel=1e-12)
    assert gbm.partial_mean_above(CFG, x, s, c) == pytest.approx(above, rel=1e-12)


def test_cdf_matches_lognormal():
    x, s, c = 10.0, 3.0, 11.0
    m = (CFG.theta - CFG.alpha - 0.5 * CFG.sigma**2) * s
    v = CFG.sigma * math.sqrt(s)
    ref = 0.5 * math.erfc(-(math.log(c / x) - m) / v / math.sqrt(2))
    assert gbm.cdf_below(CFG, x, s, c) == pytest.approx(ref, rel=1e-14)


def test_step_rejects_negative_horizon():
    with pytest.raises(ValueError):
        gbm.GbmStep.of(CFG, -1.0)


def test_sampler_moments():
    t = np.linspace(0, 5, 6)
    paths = gbm.sample_paths(CFG, 10.0, t, seed=3, n_paths=200_000)
    est = paths[:, -1].mean()
    se = paths[:, -1].std(ddof=1) / math.sqrt(len(paths))
    assert abs(est - gbm.mean(CFG, 10.0, 5.0)) < 4 * se
    below = (paths[:, -1] * (paths[:, -1] <= 11.0)).mean()
    assert below == pytest.approx(gbm.partial_mean_below(CFG, 10.0, 5.0, 11.0), abs=4 * se)


def test_sampler_rejects_bad_grid():
    with pytest.raises(ValueError):
        gbm.sample_paths(CFG, 1.0, [0.0, 1.0, 1.0], 0, 3)


@settings(max_examples=200)
@given(st.floats(-8.0, 8.0))
def test_norm_cdf_symmetry(z):
    assert abs(gbm.norm_cdf(z) + gbm.norm_cdf(-z) - 1.0) < 1e-15


@settings(max_examples=100)
@given(st.floats(0.5, 200.0), st.floats(0.01, 30.0), st.floats(0.5, 200.0))
def test_partial_means_sum_to_mean(x, s, c):
    total = gbm.partial_mean_below(CFG, x, s, c) + gbm.partial_mean_above(CFG, x, s, c)
    assert total == pytest.approx(gbm.mean(CFG, x, s), rel=1e-12)


@settings(max_examples=100)
@given(st.floats(0.0, 25.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_discount_additive(t, s1, s2):
    lhs = gbm.discount(CFG, t, s1 + s2)
    rhs = gbm.discount(CFG, t, s1) * gbm.discount(CFG, t + s1, s2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 500), st.integers(1, 20), st.integers(1, 13))
def test_rng_batches_are_consistent(seed, first, n_paths, n_steps):
    whole = gbm.standard_normals(seed, 0, first + n_paths, n_steps)
    part = gbm.standard_normals(seed, first, n_paths, n_steps)
    np.testing.assert_array_equal(whole[first:], part)
    np.testing.assert_array_equal(part, gbm.standard_normals(seed, first, n_paths, n_steps))


def test_sample_path_reproducible():
    t = np.linspace(0, 1, 11)
    a = gbm.sample_path(CFG, 5.0, t, seed=7, path_id=42)
    b = gbm.sample_paths(CFG, 5.0, t, seed=7, n_paths=50)[42]
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gbm.sample_path(CFG, 5.0, t, seed=8, path_id=42))
