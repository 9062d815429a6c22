"""Problem coefficients, regime classification and the K=0 reduction.

The running gain of delaying annuitization is ``H(t, x) = g(t) x + K ell(t)``
with

    g = f' + beta (1 - f) + (theta - rho) f,    ell = r f - f',
    r = rho + mu_S(eta + t),                    beta = alpha + mu_S(eta + t).

``gamma = -K ell / g`` is the zero level of ``H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .mortality import GompertzMakeham, MortalityLaw, hazard, integrated_hazard, moneys_worth

_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class ConstantF:
    """Money's worth held constant at ``f`` (zero derivative)."""

    f: float

    def __post_init__(self):
        if not self.f > 0:
            raise ConfigError("constant money's worth must be positive")


@dataclass(frozen=True)
class ProportionalHazard:
    """Money's worth from subjective and objective annuity factors."""


@dataclass(frozen=True)
class ProblemConfig:
    """Market, horizon and mortality inputs.

    Rates are per year, ``sigma`` per square-root year, ``T`` and ``eta`` in
    years, ``K`` in currency units (a fee if positive, an incentive if
    negative).
    """

    theta: float = 0.045
    alpha: float = 0.035
    sigma: float = 0.10
    rho: float = 0.04
    rho_hat: float = 0.04
    K: float = 2.0
    T: float = 30.0
    eta: float = 50.0
    subjective: MortalityLaw = field(default_factory=MortalityLaw)
    objective: MortalityLaw = field(default_factory=MortalityLaw)
    scenario: ConstantF | ProportionalHazard = field(default_factory=lambda: ConstantF(1.0))

    def __post_init__(self):
        for name in ("sigma", "rho", "rho_hat", "T", "eta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("theta", "alpha", "K"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @classmethod
    def constant_f(cls, f: float, **kw) -> ProblemConfig:
        return cls(scenario=ConstantF(f), **kw)

    @classmethod
    def proportional(cls, load: float, base: GompertzMakeham | None = None, **kw) -> ProblemConfig:
        """Subjective hazard ``(1+load)`` times the objective one."""
        base = base or GompertzMakeham()
        return cls(
            subjective=MortalityLaw(base, load),
            objective=MortalityLaw(base, 0.0),
            scenario=ProportionalHazard(),
            **kw,
        )

    def with_(self, **kw) -> ProblemConfig:
        return replace(self, **kw)

    @property
    def g_eps(self) -> float:
        return 1e-12 * (1.0 + abs(self.theta - self.rho))


# --------------------------------------------------------------------------
# pointwise coefficients


def rate_r(cfg: ProblemConfig, t):
    return cfg.rho + hazard(cfg.subjective, cfg.eta + np.asarray(t, dtype=float))


def rate_beta(cfg: ProblemConfig, t):
    return cfg.alpha + hazard(cfg.subjective, cfg.eta + np.asarray(t, dtype=float))


def g_ell(cfg: ProblemConfig, t):
    """Return ``(g, ell)`` at time(s) ``t``."""
    f, fp = moneys_worth(cfg, t)
    r = rate_r(cfg, t)
    beta = rate_beta(cfg, t)
    g = fp + beta * (1.0 - f) + (cfg.theta - cfg.rho) * f
    ell = r * f - fp
    return g, ell


def H(cfg: ProblemConfig, t, x):
    g, ell = g_ell(cfg, t)
    return g * np.asarray(x, dtype=float) + cfg.K * ell


def G(cfg: ProblemConfig, t, x):
    f, _ = moneys_worth(cfg, t)
    return f * (np.asarray(x, dtype=float) - cfg.K)


def gamma(cfg: ProblemConfig, t):
    """Zero level of ``H``; ``None`` where ``|g| <= g_eps``.

    For array ``t`` the undefined entries are ``nan``.
    """
    g, ell = g_ell(cfg, t)
    if np.ndim(g) == 0:
        if abs(g) <= cfg.g_eps:
            return None
        return -cfg.K * ell / g
    out = np.full(np.shape(g), np.nan)
    ok = np.abs(g) > cfg.g_eps
    out[ok] = -cfg.K * ell[ok] / g[ok]
    return out


@dataclass(frozen=True)
class CoeffTable:
    """Coefficients tabulated on a time grid.

    ``disc[i]`` is the discount factor from time 0 to ``t[i]``, including
    subjective mortality, so ``disc[j] / disc[i]`` discounts from ``t[i]``
    to ``t[j]``.
    """

    t: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    r: np.ndarray
    beta: np.ndarray
    g: np.ndarray
    ell: np.ndarray
    disc: np.ndarray
    gamma: np.ndarray


def tabulate(cfg: ProblemConfig, t) -> CoeffTable:
    t = np.asarray(t, dtype=float)
    f, fp = moneys_worth(cfg, t)
    f = np.asarray(f, dtype=float)
    fp = np.asarray(fp, dtype=float)
    r = rate_r(cfg, t)
    beta = rate_beta(cfg, t)
    g = fp + beta * (1.0 - f) + (cfg.theta - cfg.rho) * f
    ell = r * f - fp
    disc = np.exp(-cfg.rho * t - integrated_hazard(cfg.subjective, cfg.eta, t))
    gam = np.full(t.shape, np.nan)
    ok = np.abs(g) > cfg.g_eps
    gam[ok] = -cfg.K * ell[ok] / g[ok]
    return CoeffTable(t, f, fp, r, beta, g, ell, disc, gam)


# --------------------------------------------------------------------------
# regimes


class RegimeKind(str, Enum):
    STOP_EVERYWHERE = "StopEverywhere"
    NEVER_STOP_EARLY = "NeverStopEarly"
    DETERMINISTIC_K0 = "DeterministicK0"
    LOWER_BOUNDARY = "LowerBoundary"
    UPPER_BOUNDARY = "UpperBoundary"
    RESTRICTED_HORIZON = "RestrictedHorizon"
    UNSUPPORTED = "Unsupported"


class Orientation(str, Enum):
    """Which side of the boundary is the stopping region."""

    STOP_BELOW = "StopBelow"
    STOP_ABOVE = "StopAbove"


@dataclass(frozen=True)
class Regime:
    """Classification of a problem instance.

    For ``RestrictedHorizon`` the boundary problem lives on ``interval``
    with orientation set by ``inner``; ``outside`` says what happens on the
    rest of ``[0, T]`` (``"stop"``, ``"continue"`` or ``"approximate"``).
    """

    kind: RegimeKind
    t0: float | None = None
    inner: RegimeKind | None = None
    interval: tuple[float, float] | None = None
    outside: str | None = None
    reason: str | None = None

    @property
    def solvable(self) -> bool:
        return self.kind in (RegimeKind.LOWER_BOUNDARY, RegimeKind.UPPER_BOUNDARY) or (
            self.kind is RegimeKind.RESTRICTED_HORIZON
        )

    @property
    def orientation(self) -> Orientation | None:
        k = self.inner if self.kind is RegimeKind.RESTRICTED_HORIZON else self.kind
        if k is RegimeKind.LOWER_BOUNDARY:
            return Orientation.STOP_BELOW
        if k is RegimeKind.UPPER_BOUNDARY:
            return Orientation.STOP_ABOVE
        return None

    def effective_interval(self, T: float) -> tuple[float, float]:
        return self.interval if self.interval is not None else (0.0, float(T))

    def describe(self) -> str:
        if self.kind is RegimeKind.RESTRICTED_HORIZON:
            lo, hi = self.interval
            return f"RestrictedHorizon(t0={self.t0:.8g}, {self.inner.value} on [{lo:.8g}, {hi:.8g}], outside={self.outside})"
        if self.kind is RegimeKind.UNSUPPORTED:
            return f"Unsupported({self.reason})"
        return self.kind.value


def _sign_changes(cfg: ProblemConfig, ts: np.ndarray, g: np.ndarray) -> list[float]:
    """Roots of g between scan nodes, refined to 1e-8 years."""
    nz = np.flatnonzero(g != 0)
    roots = []
    for a, b in zip(nz[:-1], nz[1:]):
        if np.sign(g[a]) == np.sign(g[b]):
            continue
        if b > a + 1:
            roots.append(float(ts[a + 1]))  # exact zero on a node
        else:
            fun = lambda tt: float(g_ell(cfg, tt)[0])
            roots.append(brentq(fun, ts[a], ts[b], xtol=1e-8, rtol=4 * np.finfo(float).eps))
    return roots


def classify(cfg: ProblemConfig, scan_points: int = 512) -> Regime:
    """Classify the instance from the signs of g, K ell and gamma on a scan grid."""
    if scan_points < 64:
        raise ConfigError("scan_points must be at least 64")
    ts = np.linspace(0.0, cfg.T, scan_points)
    g, ell = g_ell(cfg, ts)
    K = cfg.K
    roots = _sign_changes(cfg, ts, g)
    # a g that vanishes only at T still has a sign on [0, T)
    roots = [r for r in roots if r < cfg.T - 1e-8]

    if not roots:
        gs = np.sign(g[np.abs(g) > cfg.g_eps])
        if gs.size == 0:
            return Regime(RegimeKind.UNSUPPORTED, reason="g vanishes identically")
        sg = gs[0]
        kl = K * ell
        if np.all(kl * sg >= 0):
            # gamma <= 0: H has one sign for x > 0
            return Regime(RegimeKind.STOP_EVERYWHERE if sg < 0 else RegimeKind.NEVER_STOP_EARLY)
        if np.all(kl * sg < 0):
            return Regime(RegimeKind.LOWER_BOUNDARY if sg > 0 else RegimeKind.UPPER_BOUNDARY)
        return Regime(RegimeKind.UNSUPPORTED, reason="K*ell changes sign")

    if K == 0:
        return Regime(RegimeKind.DETERMINISTIC_K0, t0=roots[0])
    if len(roots) > 1:
        return Regime(RegimeKind.UNSUPPORTED, reason=f"g changes sign {len(roots)} times")
    if np.any(ell <= 0):
        return Regime(RegimeKind.UNSUPPORTED, reason="ell is not positive")

    t0 = roots[0]
    decreasing = g[0] > 0
    if decreasing and K < 0:
        # g > 0 before t0, gamma -> +inf at t0, stop everywhere after
        return Regime(RegimeKind.RESTRICTED_HORIZON, t0=t0, inner=RegimeKind.LOWER_BOUNDARY,
                      interval=(0.0, t0), outside="stop")
    if decreasing and K > 0:
        # H > 0 before t0 forces continuation; g < 0 after
        return Regime(RegimeKind.RESTRICTED_HORIZON, t0=t0, inner=RegimeKind.UPPER_BOUNDARY,
                      interval=(t0, cfg.T), outside="continue")
    if K < 0:
        return Regime(RegimeKind.RESTRICTED_HORIZON, t0=t0, inner=RegimeKind.LOWER_BOUNDARY,
                      interval=(t0, cfg.T), outside="approximate")
    return Regime(RegimeKind.UNSUPPORTED, t0=t0, reason="K > 0 with g increasing through zero")


# --------------------------------------------------------------------------
# K = 0


def _F_integrand(cfg: ProblemConfig, t: float, u):
    u = np.asarray(u, dtype=float)
    g, _ = g_ell(cfg, t + u)
    disc = np.exp(-cfg.rho * (t + u) - integrated_hazard(cfg.subjective, cfg.eta, t + u))
    return disc * g * np.exp((cfg.theta - cfg.alpha) * u)


def _F(cfg: ProblemConfig, t: float, s: float, panels: int = 64) -> float:
    if s <= 0:
        return 0.0
    edges = np.linspace(0.0, s, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    u = (mid[:, None] + half[:, None] * _PANEL_X[None, :]).ravel()
    w = (half[:, None] * _PANEL_W[None, :]).ravel()
    return float((_F_integrand(cfg, t, u) * w).sum())


def k0_optimal_time(cfg: ProblemConfig, t: float = 0.0, scan_points: int = 512) -> float:
    """Optimal waiting time ``s`` in ``[0, T-t]`` when ``K = 0``.

    Maximizes ``F(s) = int_0^s disc(t+u) g(t+u) e^{(theta-alpha) u} du``.
    Interior maximizers sit where g crosses zero from above, so the scan
    locates those crossings, refines them by root finding and compares F at
    the candidates. Ties resolve to the earliest time.
    """
    if cfg.K != 0:
        raise ConfigError("k0_optimal_time requires K = 0")
    if not 0.0 <= t <= cfg.T:
        raise ConfigError("t must lie in [0, T]")
    span = cfg.T - t
    if span == 0:
        return 0.0
    us = np.linspace(0.0, span, max(scan_points, 64))
    g, _ = g_ell(cfg, t + us)
    cands = [0.0]
    for k in range(len(us) - 1):
        if g[k] > 0 and g[k + 1] <= 0:
            fun = lambda u: float(g_ell(cfg, t + u)[0])
            cands.append(us[k + 1] if g[k + 1] == 0 else brentq(fun, us[k], us[k + 1], xtol=1e-12))
    cands.append(span)
    vals = [_F(cfg, t, c) for c in cands]
    scale = max(abs(v) for v in vals) or 1.0
    best = max(vals)
    for c, v in zip(cands, vals):
        if v >= best - 1e-12 * scale:
            return float(c)
    return float(cands[-1])  # pragma: no cover
