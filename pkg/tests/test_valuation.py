from __future__ import annotations

import numpy as np
import pytest

from annuitize.coeffs import ProblemConfig
from annuitize.valuation import premium, surface, surface_grid, tolerance, value_at


def test_value_meets_payoff_on_boundary(upper, lower):
    for b, _ in (upper, lower):
        for i in (0, b.n // 2, b.n - 1):
            x = b.values[i]
            G = b.table.f[i] * (x - b.cfg.K)
            assert value_at(None, b, b.t_grid[i], x) == pytest.approx(G, abs=tolerance(G))


def test_terminal_value_is_payoff(upper):
    b, _ = upper
    xs = np.linspace(1, 100, 9)
    np.testing.assert_array_equal(value_at(b.cfg, b, b.t_grid[-1], xs), b.table.f[-1] * (xs - b.cfg.K))


def test_scalar_in_scalar_out(lower):
    b, _ = lower
    v = value_at(b.cfg, b, 0.0, 10.0)
    assert isinstance(v, float)
    assert premium(b.cfg, b, 0.0, 10.0) > 0


def test_wrong_config_rejected(upper):
    b, _ = upper
    with pytest.raises(ValueError):
        value_at(ProblemConfig.constant_f(1.1, K=2), b, 0.0, 10.0)


def test_premium_positive_inside_continuation(upper, lower):
    for b, _ in (upper, lower):
        idx, xs = surface_grid(b, n_t=12, n_x=80)
        s = surface(b.cfg, b, xs, idx[:-1])
        inside = ~s.stop
        assert np.all(s.premium[inside] > -tolerance(s.G[inside]))
        assert np.all(s.V >= s.G - tolerance(s.G))


def test_surface_labels_and_rows(lower):
    b, _ = lower
    idx, xs = surface_grid(b, n_t=4, n_x=5)
    s = surface(b.cfg, b, xs, idx)
    rows = list(s.rows())
    assert len(rows) == len(idx) * len(xs)
    assert {r[4] for r in rows} <= {"Stop", "Continue"}
    assert s.labels[0, 0] == "Stop"  # smallest wealth lies below a stop-below boundary
