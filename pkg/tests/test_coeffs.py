from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annuitize.coeffs import (
    H,
    Orientation,
    ProblemConfig,
    RegimeKind,
    classify,
    g_ell,
    gamma,
    k0_optimal_time,
    tabulate,
)
from annuitize.errors import ConfigError
from annuitize.mortality import GompertzMakeham


def _g_by_hand(f, t, theta=0.045, alpha=0.035, rho=0.04, eta=50.0):
    gm = GompertzMakeham()
    mu = gm.A + gm.B * gm.C ** (eta + t)
    return (alpha + mu) * (1 - f) + (theta - rho) * f, (rho + mu) * f


@pytest.mark.parametrize("f", [0.8, 1.0, 1.2])
def test_g_ell_constant_f(f):
    t = np.linspace(0, 30, 31)
    g, ell = g_ell(ProblemConfig.constant_f(f), t)
    g_ref, ell_ref = _g_by_hand(f, t)
    np.testing.assert_allclose(g, g_ref, rtol=1e-13, atol=1e-16)
    np.testing.assert_allclose(ell, ell_ref, rtol=1e-13)


def test_gamma_scalar_none_when_g_vanishes():
    # theta = rho and f = 1 give g = 0 identically
    cfg = ProblemConfig.constant_f(1.0, theta=0.04)
    assert gamma(cfg, 1.0) is None
    assert np.all(np.isnan(gamma(cfg, np.array([0.0, 1.0]))))


def test_tabulate_discount_from_zero():
    cfg = ProblemConfig.proportional(0.05)
    tab = tabulate(cfg, np.array([0.0, 5.0, 12.0]))
    assert tab.disc[0] == 1.0
    # disc(12)/disc(5) should equal the discount over [5, 12]
    from annuitize.gbm import discount

    assert tab.disc[2] / tab.disc[1] == pytest.approx(discount(cfg, 5.0, 7.0), rel=1e-13)


@pytest.mark.parametrize(
    "cfg,kind,orientation",
    [
        (ProblemConfig.constant_f(1.2, K=2), RegimeKind.UPPER_BOUNDARY, Orientation.STOP_ABOVE),
        (ProblemConfig.constant_f(0.8, K=-2), RegimeKind.LOWER_BOUNDARY, Orientation.STOP_BELOW),
        (ProblemConfig.constant_f(1.2, K=-1), RegimeKind.STOP_EVERYWHERE, None),
        (ProblemConfig.constant_f(1.2, K=0), RegimeKind.STOP_EVERYWHERE, None),
        (ProblemConfig.constant_f(0.8, K=0), RegimeKind.NEVER_STOP_EARLY, None),
        (ProblemConfig.constant_f(0.8, K=2), RegimeKind.NEVER_STOP_EARLY, None),
        (ProblemConfig.constant_f(0.9, K=2, theta=0.035), RegimeKind.UNSUPPORTED, None),
    ],
)
def test_classification(cfg, kind, orientation):
    reg = classify(cfg)
    assert reg.kind is kind
    assert reg.orientation is orientation


def test_restricted_horizon_cases():
    reg = classify(ProblemConfig.constant_f(1.1, K=-2))
    assert reg.kind is RegimeKind.RESTRICTED_HORIZON
    assert reg.inner is RegimeKind.LOWER_BOUNDARY and reg.outside == "stop"
    assert reg.t0 == pytest.approx(18.8388, abs=1e-4)
    assert reg.interval == (0.0, reg.t0)

    reg = classify(ProblemConfig.constant_f(1.1, K=2))
    assert reg.inner is RegimeKind.UPPER_BOUNDARY and reg.outside == "continue"
    assert reg.interval == (reg.t0, 30.0)

    reg = classify(ProblemConfig.constant_f(0.9, K=-2, theta=0.035))
    assert reg.inner is RegimeKind.LOWER_BOUNDARY and reg.outside == "approximate"
    assert reg.t0 == pytest.approx(11.339, abs=1e-3)
    assert "RestrictedHorizon" in reg.describe()


def test_deterministic_k0():
    cfg = ProblemConfig.constant_f(1.1, K=0)
    reg = classify(cfg)
    assert reg.kind is RegimeKind.DETERMINISTIC_K0
    g, _ = g_ell(cfg, reg.t0)
    assert abs(g) < 1e-9
    assert k0_optimal_time(cfg) == pytest.approx(reg.t0, abs=1e-6)


def test_k0_requires_zero_fee():
    with pytest.raises(ConfigError):
        k0_optimal_time(ProblemConfig.constant_f(1.1, K=1))


def test_scan_points_floor():
    with pytest.raises(ConfigError):
        classify(ProblemConfig(), scan_points=10)


@pytest.mark.parametrize("kw", [dict(sigma=0.0), dict(T=-1.0), dict(rho=np.nan), dict(K=np.inf)])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        ProblemConfig(**kw)


@settings(max_examples=60)
@given(st.floats(0.7, 1.3), st.floats(-5, 5).filter(lambda k: abs(k) > 1e-3), st.floats(0.0, 30.0))
def test_H_vanishes_at_gamma(f, K, t):
    cfg = ProblemConfig.constant_f(f, K=K)
    gam = gamma(cfg, t)
    if gam is None:
        return
    g, ell = g_ell(cfg, t)
    assert abs(H(cfg, t, gam)) <= 1e-12 * (abs(g * gam) + abs(K * ell))


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(0.0, 30.0))
def test_proportional_ell_positive(load, t):
    _, ell = g_ell(ProblemConfig.proportional(load), t)
    assert ell > 0
