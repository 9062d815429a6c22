"""Independent validators: an obstacle-problem PDE solver and Monte Carlo policy values.

The PDE oracle works in ``y = ln x`` where the generator has constant
coefficients,

    V_t + a V_y + (sigma^2/2) V_yy - r(t) V + beta(t) e^y = 0,  V >= G,

with ``a = theta - alpha - sigma^2/2``. It never touches the integral
equation, so agreement between the two is a genuine cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .boundary import Boundary
from .coeffs import Orientation, ProblemConfig, Regime, classify, tabulate
from .errors import ConfigError, PsorDivergence, StabilityViolation
from .gbm import sample_paths
from .valuation import ValueSurface

EXPLICIT = "ExplicitProjected"
CN_PSOR = "CrankNicolsonPSOR"
PDE_CONTACT_TOL = 1e-6


@dataclass(frozen=True)
class PdeGrid:
    """Log-space grid ``y in [y_min, y_max]`` with ``n_y`` nodes and ``n_t`` time steps."""

    y_min: float
    y_max: float
    n_y: int = 400
    n_t: int = 2000
    scheme: str = EXPLICIT
    omega: float = 1.2
    max_iter: int = 10_000
    tol: float = 1e-10

    def __post_init__(self):
        if self.scheme not in (EXPLICIT, CN_PSOR):
            raise ConfigError(f"unknown PDE scheme {self.scheme!r}")
        if not self.y_max > self.y_min or self.n_y < 8 or self.n_t < 1:
            raise ConfigError("degenerate PDE grid")
        if not 0 < self.omega < 2:
            raise ConfigError("PSOR relaxation must lie in (0, 2)")

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.n_y)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @classmethod
    def around(cls, cfg: ProblemConfig, n_y: int = 400, n_t: int = 2000, scheme: str = EXPLICIT,
               boundary: Boundary | None = None, pad: float = 10.0, regime: Regime | None = None, **kw) -> PdeGrid:
        """Domain spanning ``gamma`` (and ``boundary`` if given) widened by ``pad`` each way."""
        regime = regime or (boundary.regime if boundary is not None else classify(cfg))
        lo, hi = regime.effective_interval(cfg.T)
        tab = tabulate(cfg, np.linspace(lo, hi, 257))
        vals = list(tab.gamma[np.isfinite(tab.gamma) & (tab.gamma > 0)])
        if boundary is not None:
            vals += list(boundary.values[np.isfinite(boundary.values)])
        if not vals:
            raise ConfigError("no finite positive gamma to anchor the PDE domain")
        vals = np.clip(vals, 1e-8, 1e8)
        return cls(math.log(min(vals) / pad), math.log(max(vals) * pad), n_y, n_t, scheme, **kw)


@dataclass(frozen=True)
class PdeBoundary:
    """Boundary read off the PDE contact set, one value per time slice."""

    t: np.ndarray
    values: np.ndarray
    orientation: Orientation

    def at(self, t):
        return np.interp(t, self.t, self.values)


def pde_solve(cfg: ProblemConfig, grid: PdeGrid, regime: Regime | None = None,
              interval: tuple[float, float] | None = None,
              contact_tol: float = PDE_CONTACT_TOL) -> tuple[ValueSurface, PdeBoundary]:
    """Backward induction for the obstacle problem from ``V(T) = G(T)``.

    Raises
    ------
    StabilityViolation
        Explicit time step above ``dy^2 / sigma^2``.
    PsorDivergence
        PSOR exceeded ``max_iter`` at some time step.
    """
    regime = regime or classify(cfg)
    orient = regime.orientation
    if orient is None:
        raise ConfigError(f"regime {regime.describe()} has no free boundary")
    lo, hi = interval or regime.effective_interval(cfg.T)
    y = grid.y
    x = np.exp(y)
    dy = grid.dy
    dt = (hi - lo) / grid.n_t
    sig2 = cfg.sigma**2
    if grid.scheme == EXPLICIT and dt > dy * dy / sig2:
        raise StabilityViolation(f"dt={dt:.3g} exceeds dy^2/sigma^2={dy * dy / sig2:.3g}")
    t = lo + (hi - lo) * np.arange(grid.n_t + 1) / grid.n_t
    tab = tabulate(cfg, t)
    a = cfg.theta - cfg.alpha - 0.5 * sig2
    # the stopping side gets V = G, the continuation side is extrapolated
    if orient is Orientation.STOP_ABOVE:
        left, right = 1, 0
    else:
        left, right = 0, 1

    cm = 0.5 * sig2 / dy**2 - 0.5 * a / dy
    cp = 0.5 * sig2 / dy**2 + 0.5 * a / dy
    c0 = -sig2 / dy**2

    V = np.empty((grid.n_t + 1, grid.n_y))
    Gs = tab.f[:, None] * (x[None, :] - cfg.K)
    V[-1] = Gs[-1]
    iters = 0
    for k in range(grid.n_t - 1, -1, -1):
        Vn = V[k + 1]
        obs = Gs[k]
        if grid.scheme == EXPLICIT:
            Vk = Vn.copy()
            Vk[1:-1] = Vn[1:-1] + dt * (cm * Vn[:-2] + (c0 - tab.r[k + 1]) * Vn[1:-1] + cp * Vn[2:]
                                        + tab.beta[k + 1] * x[1:-1])
            kernels._pykernels._edge(Vk, obs, left, right)
            np.maximum(Vk, obs, out=Vk)
        else:
            h = 0.5 * dt
            lower = np.full(grid.n_y, -h * cm)
            upper = np.full(grid.n_y, -h * cp)
            diag = np.full(grid.n_y, 1.0 - h * (c0 - tab.r[k]))
            rhs = Vn.copy()
            rhs[1:-1] = Vn[1:-1] + h * (cm * Vn[:-2] + (c0 - tab.r[k + 1]) * Vn[1:-1] + cp * Vn[2:]) \
                + h * (tab.beta[k] + tab.beta[k + 1]) * x[1:-1]
            Vk = np.maximum(Vn, obs)
            it = kernels.psor(lower, diag, upper, rhs, np.ascontiguousarray(obs), Vk,
                              grid.omega, grid.tol, grid.max_iter, left, right)
            if it < 0:
                raise PsorDivergence(f"PSOR did not converge at t={t[k]:.6g} within {grid.max_iter} sweeps")
            iters += it
        V[k] = Vk

    w = V - Gs
    contact = w <= contact_tol * (1.0 + np.abs(Gs))
    bvals = np.full(len(t), np.nan)
    for k in range(len(t)):
        hits = np.flatnonzero(contact[k])
        if orient is Orientation.STOP_ABOVE:
            # scan upward from the continuation side
            hits = hits[hits > 0]
            bvals[k] = x[hits[0]] if hits.size else np.inf
        else:
            hits = hits[hits < grid.n_y - 1]
            bvals[k] = x[hits[-1]] if hits.size else 0.0
    surf = ValueSurface(t, x, V, Gs, contact)
    return surf, PdeBoundary(t, bvals, orient)


def sup_relative_gap(ie: Boundary, pde: PdeBoundary, t_max: float | None = None) -> float:
    """``max |b_pde - b_ie| / b_ie`` over integral-equation nodes up to ``t_max``."""
    t = ie.t_grid
    if t_max is None:
        t_max = t[-1] - 1.0
    sel = (t <= t_max + 1e-12) & np.isfinite(ie.values)
    b = ie.values[sel]
    return float(np.max(np.abs(pde.at(t[sel]) - b) / b))


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int

    def z_score(self, reference: float) -> float:
        if self.std_error == 0:
            return 0.0 if reference == self.mean else math.inf
        return (self.mean - reference) / self.std_error


@dataclass(frozen=True)
class StrategyTable:
    """Policy estimates on common random numbers, with paired standard errors."""

    estimates: dict
    se_diff: dict = field(default_factory=dict)

    def margin(self, other: str, policy: str = "boundary") -> float:
        """``mean(policy) - mean(other)`` in units of the paired standard error."""
        d = self.estimates[policy].mean - self.estimates[other].mean
        se = self.se_diff[(policy, other)]
        return d / se if se > 0 else (math.inf if d >= 0 else -math.inf)

    def dominates(self, other: str, policy: str = "boundary", k: float = 2.0) -> bool:
        d = self.estimates[policy].mean - self.estimates[other].mean
        return d >= -k * self.se_diff[(policy, other)]


@dataclass(frozen=True)
class _SimGrid:
    """Monitoring grid: boundary nodes from ``i0`` split into ``substeps`` pieces."""

    t: np.ndarray
    disc: np.ndarray
    beta: np.ndarray
    f: np.ndarray
    values: np.ndarray


def _sim_grid(cfg: ProblemConfig, b: Boundary, i0: int, substeps: int, values: np.ndarray | None) -> _SimGrid:
    vals = (b.values if values is None else np.asarray(values, dtype=float))[i0:]
    tb = b.t_grid[i0:]
    if substeps == 1 or len(tb) == 1:
        tab = b.table
        return _SimGrid(tb, tab.disc[i0:], tab.beta[i0:], tab.f[i0:], vals)
    lam = np.arange(substeps) / substeps
    t = np.append((tb[:-1, None] + np.diff(tb)[:, None] * lam[None, :]).ravel(), tb[-1])
    v0, v1 = vals[:-1, None], vals[1:, None]
    with np.errstate(invalid="ignore"):
        fine = np.where(np.isinf(v0) | np.isinf(v1), np.where(np.isinf(v0), v0, v1), v0 + (v1 - v0) * lam[None, :])
    fine = np.append(fine.ravel(), vals[-1])
    tab = tabulate(cfg, t)
    return _SimGrid(t, tab.disc, tab.beta, tab.f, fine)


def _payoffs(cfg: ProblemConfig, sg: _SimGrid, paths: np.ndarray, policies: dict) -> dict:
    """Discounted payoffs per path for each stopping rule.

    ``policies`` maps a name to a function ``(paths, boundary values) -> stop
    mask`` on the monitoring grid; the last node always stops.
    """
    d = sg.disc / sg.disc[0]
    integrand = paths * (d * sg.beta)[None, :]
    dt = np.diff(sg.t)
    cum = np.zeros_like(paths)
    cum[:, 1:] = np.cumsum(0.5 * (integrand[:, 1:] + integrand[:, :-1]) * dt[None, :], axis=1)
    gain = (d * sg.f)[None, :] * (paths - cfg.K)
    rows = np.arange(paths.shape[0])
    out = {}
    for name, rule in policies.items():
        mask = rule(paths)
        mask[:, -1] = True
        tau = np.argmax(mask, axis=1)
        out[name] = cum[rows, tau] + gain[rows, tau]
    return out


def _rule(orientation: Orientation, vals: np.ndarray):
    if orientation is Orientation.STOP_ABOVE:
        return lambda p: p >= vals[None, :]
    return lambda p: p <= vals[None, :]


def _simulate(cfg, b: Boundary, t: float, x: float, n_paths: int, seed: int, policies: dict,
              batch: int, substeps: int):
    """Payoff samples per policy; ``policies`` maps names to boundary arrays or rules."""
    i0 = b.index_of(t)
    grids = {}
    rules = {}
    for name, spec in policies.items():
        if callable(spec):
            rules[name] = spec
            continue
        sg = _sim_grid(cfg, b, i0, substeps, spec)
        grids[name] = sg
        rules[name] = _rule(b.orientation, sg.values)
    base = next(iter(grids.values()), None) or _sim_grid(cfg, b, i0, substeps, None)
    sums: dict = {}
    done = 0
    while done < n_paths:
        nb = min(batch, n_paths - done)
        if len(base.t) > 1:
            paths = sample_paths(cfg, x, base.t, seed, nb, first_path=done)
        else:
            paths = np.full((nb, 1), float(x))
        pay = _payoffs(cfg, base, paths, rules)
        for k, v in pay.items():
            sums.setdefault(k, []).append(v)
        done += nb
    return {k: np.concatenate(v) for k, v in sums.items()}


def mc_policy_value(cfg: ProblemConfig, boundary: Boundary, t: float, x: float, n_paths: int = 100_000,
                    seed: int = 0, values: np.ndarray | None = None, batch: int = 10_000,
                    substeps: int = 1) -> McEstimate:
    """Expected discounted payoff of stopping at the first monitoring node in the stopping region.

    Monitoring happens on the boundary grid, optionally split into
    ``substeps`` pieces per step with the boundary interpolated linearly.
    ``values`` overrides the boundary (same grid), e.g. for perturbation
    probes.
    """
    if n_paths < 2:
        raise ConfigError("need at least two paths")
    vals = boundary.values if values is None else np.asarray(values, dtype=float)
    pay = _simulate(cfg, boundary, t, x, n_paths, seed, {"boundary": vals}, batch, substeps)["boundary"]
    return McEstimate(float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(n_paths)), n_paths, seed)


def mc_strategy_comparison(cfg: ProblemConfig, boundary: Boundary, t: float, x: float, n_paths: int = 100_000,
                           seed: int = 0, extra: dict | None = None, batch: int = 10_000,
                           substeps: int = 1) -> StrategyTable:
    """Boundary rule against stop-now and hold-to-horizon on common random numbers.

    ``extra`` maps names to alternative boundary value arrays on the same
    grid; all policies see the same paths.
    """
    policies = {
        "boundary": boundary.values,
        "stop_now": lambda p: np.ones(p.shape, dtype=bool),
        "hold_to_T": lambda p: np.zeros(p.shape, dtype=bool),
    }
    for name, vals in (extra or {}).items():
        policies[name] = np.asarray(vals, dtype=float)
    pays = _simulate(cfg, boundary, t, x, n_paths, seed, policies, batch, substeps)
    est = {k: McEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_paths)), n_paths, seed)
           for k, v in pays.items()}
    se = {("boundary", k): float((pays["boundary"] - v).std(ddof=1) / math.sqrt(n_paths))
          for k, v in pays.items() if k != "boundary"}
    return StrategyTable(est, se)


def degenerate_boundary(b: Boundary, stop_everywhere: bool) -> Boundary:
    """Same grid with a boundary that stops everywhere or never before the horizon."""
    above = b.orientation is Orientation.STOP_ABOVE
    fill = (0.0 if above else np.inf) if stop_everywhere else (np.inf if above else 0.0)
    vals = np.full_like(b.values, fill)
    out = replace(b, values=vals)
    return out
