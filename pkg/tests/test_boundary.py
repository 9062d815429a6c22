from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from annuitize.boundary import (
    audit,
    gamma_violations,
    kernel_Y,
    make_grid,
    new_boundary,
    residual,
    solve,
    solve_step,
    terminal_value,
)
from annuitize.coeffs import Orientation, ProblemConfig, RegimeKind, classify, tabulate
from annuitize.errors import BracketFailure, ConfigError, DegenerateTerminal, GridMismatch
from annuitize import gbm


def test_make_grid_uniform_and_refined():
    t = make_grid(0.0, 30.0, 600)
    assert t[0] == 0.0 and t[-1] == 30.0 and len(t) == 601
    r = make_grid(0.0, 30.0, 600, refine_near_T=True)
    assert r[-1] == 30.0 and np.all(np.diff(r) > 0)
    w = np.diff(r)
    assert w[-1] == pytest.approx(w[0] / 10, rel=1e-9)
    with pytest.raises(ConfigError):
        make_grid(0.0, 1.0, 8)


def test_terminal_value_is_gamma_at_T():
    cfg = ProblemConfig.constant_f(1.2, K=2)
    assert terminal_value(cfg) == pytest.approx(tabulate(cfg, [30.0]).gamma[0], rel=1e-15)
    with pytest.raises(DegenerateTerminal):
        terminal_value(ProblemConfig.constant_f(1.2, K=-1))


def test_terminal_value_infinite_at_restricted_end():
    cfg = ProblemConfig.constant_f(1.1, K=-2)
    assert terminal_value(cfg) == np.inf


def test_kernel_Y_matches_truncated_moments():
    cfg = ProblemConfig.constant_f(1.2, K=2)
    t, x, s, c = 3.0, 40.0, 2.0, 55.0
    tab = tabulate(cfg, [t + s])
    d = gbm.discount(cfg, t, s)
    M = gbm.mean(cfg, x, s)
    stop_pm = gbm.partial_mean_above(cfg, x, s, c)
    stop_p = 1.0 - gbm.cdf_below(cfg, x, s, c)
    ref = d * (tab.beta[0] * M - tab.g[0] * stop_pm - cfg.K * tab.ell[0] * stop_p)
    assert kernel_Y(cfg, t, x, s, c, Orientation.STOP_ABOVE) == pytest.approx(ref, rel=1e-12)


def test_fig2_upper(upper):
    b, rep = upper
    assert b.orientation is Orientation.STOP_ABOVE
    # frozen from a converged run of this discretization
    assert b.values[0] == pytest.approx(67.22988, abs=5e-4)
    assert b.values[-1] == b.gamma[-1]
    assert rep.max_normalized_residual < 1e-9
    assert rep.gamma_violations == 0
    assert np.all(np.isfinite(b.values))


def test_fig2_lower(lower):
    b, rep = lower
    assert b.orientation is Orientation.STOP_BELOW
    assert b.values[0] == pytest.approx(4.212336, abs=5e-6)
    assert rep.max_normalized_residual < 1e-9
    assert rep.gamma_violations == 0


def test_audit_matches_report(upper):
    b, rep = upper
    np.testing.assert_allclose(audit(b), rep.residuals)
    assert residual(b.cfg, 10, b.values[10], b) == pytest.approx(0.0, abs=1e-7 * (1 + b.values[10]))


def test_refinement_converges():
    cfg = ProblemConfig.constant_f(0.8, K=-2)
    b1, _ = solve(cfg, 150)
    b2, _ = solve(cfg, 300)
    b4, _ = solve(cfg, 600)
    e1 = abs(b1.values[0] - b4.values[0])
    e2 = abs(b2.values[0] - b4.values[0])
    assert e2 < e1


def test_refined_grid_solves():
    b, rep = solve(ProblemConfig.constant_f(1.2, K=2), 200, refine_near_T=True)
    assert rep.max_normalized_residual < 1e-9 and rep.gamma_violations == 0


def test_rectangle_scheme_runs():
    b, rep = solve(ProblemConfig.constant_f(1.2, K=2), 100, scheme="rectangle")
    assert b.scheme == "rectangle"
    assert rep.max_normalized_residual < 1e-7
    assert np.all(np.isfinite(b.values))


def test_index_of_grid_mismatch(upper):
    b, _ = upper
    assert b.index_of(b.t_grid[17]) == 17
    with pytest.raises(GridMismatch):
        b.index_of(0.01)


def test_bracket_failure_carries_landscape():
    cfg = ProblemConfig.constant_f(1.2, K=2)
    b = new_boundary(cfg, 50)
    with pytest.raises(BracketFailure) as err:
        solve_step(cfg, b.n - 1, b, max_expansions=0)
    assert err.value.node == b.n - 1
    assert len(err.value.landscape) >= 1


def test_no_boundary_regime_rejected():
    with pytest.raises(ConfigError):
        solve(ProblemConfig.constant_f(0.8, K=2), 50)


@pytest.mark.parametrize(
    "cfg,inner",
    [
        (ProblemConfig.constant_f(1.1, K=-2), RegimeKind.LOWER_BOUNDARY),
        (ProblemConfig.constant_f(0.9, K=-2, theta=0.035), RegimeKind.LOWER_BOUNDARY),
    ],
)
def test_restricted_horizon_solves(cfg, inner):
    reg = classify(cfg)
    b, rep = solve(cfg, 200, regime=reg)
    assert reg.inner is inner
    assert b.t_grid[0] == reg.interval[0] and b.t_grid[-1] == reg.interval[1]
    assert rep.max_normalized_residual < 1e-7
    assert rep.gamma_violations == 0


def test_restricted_upper_near_t0():
    # gamma blows up at t0; the first nodes after it may sit slightly below
    # gamma, by an amount that shrinks under refinement
    cfg = ProblemConfig.constant_f(1.1, K=2)
    worst = []
    for n in (200, 600):
        b, rep = solve(cfg, n)
        assert rep.max_normalized_residual < 1e-7
        ok = np.isfinite(b.gamma) & np.isfinite(b.values)
        rel = np.where(ok, (b.gamma - b.values) / np.where(ok, b.gamma, 1.0), 0.0)
        bad = np.flatnonzero(rel > 1e-6)
        assert np.all(bad <= 3)
        worst.append(rel.max())
    assert worst[1] < worst[0] < 2e-3


def test_fig4_longer_horizon_has_interior_maximum():
    cfg = ProblemConfig.proportional(-0.05, K=2, T=20, theta=0.035)
    b, _ = solve(cfg, 400)
    k = int(np.argmax(b.values))
    assert 0 < k < b.n
    assert b.values[k] - b.values[0] > 0.01 and b.values[k] - b.values[-1] > 0.01


def test_pure_python_backend_matches():
    code = (
        "from annuitize import kernels; from annuitize.boundary import solve;"
        "from annuitize.coeffs import ProblemConfig;"
        "b,_=solve(ProblemConfig.constant_f(1.2,K=2),60);"
        "print(kernels.BACKEND, repr(float(b.values[0])))"
    )
    env = dict(os.environ, ANNUITIZE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, value = out.stdout.split()
    assert backend == "python"
    b, _ = solve(ProblemConfig.constant_f(1.2, K=2), 60)
    assert float(value) == pytest.approx(b.values[0], rel=1e-10)
