"""Backward time stepping for the free-boundary integral equation.

At each node ``t_i`` the boundary value ``b_i`` is the root in ``x`` of

    G(t_i, x) = V_i(x; b_i = x, b_{i+1}, ..., b_n),

where ``V_i`` is the representation of the value function built from the
boundary already known on later nodes. Two discretizations are offered.

``"premium"`` (default)
    ``V = G + int_0^{T-t} E[disc H(X) 1{X in C}] ds``, the early exercise
    premium form. Only the continuation-region term is discretized:
    Gauss-Legendre on the panels next to ``t_i``, where the indicator has a
    ``1/sqrt(s)`` layer, and the trapezoid rule further out.
``"rectangle"``
    ``V = E[disc G(T, X_T)] + int E[disc (beta X - H 1{X in S})] ds`` with a
    right-endpoint rectangle sum over ``k = 1..n-i``.

Both share the closed-form lognormal moments and the compiled kernel that
sums continuation-side masses over future nodes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .coeffs import CoeffTable, Orientation, ProblemConfig, Regime, RegimeKind, classify, g_ell, tabulate
from .errors import BracketFailure, ConfigError, DegenerateTerminal
from .gbm import cdf_below, discount, mean, partial_mean_below

SCHEMES = ("premium", "rectangle")

ROOT_TOL = 1e-8
MAX_EXPANSIONS = 60
X_FLOOR = 1e-10


def x_cap(cfg: ProblemConfig) -> float:
    return 1e6 * max(1.0, abs(cfg.K))


# --------------------------------------------------------------------------
# grids


def make_grid(lo: float, hi: float, n_steps: int, refine_near_T: bool = False) -> np.ndarray:
    """Time nodes on ``[lo, hi]``.

    With ``refine_near_T`` the last 10% of steps shrink geometrically down to
    a tenth of the uniform step, resolving the layer where ``b`` is steep.
    """
    if n_steps < 16:
        raise ConfigError("n_steps must be at least 16")
    if not refine_near_T:
        return lo + (hi - lo) * np.arange(n_steps + 1) / n_steps
    m = max(1, int(math.ceil(0.1 * n_steps)))
    q = 10.0 ** (-1.0 / m)
    rel = np.concatenate([np.ones(n_steps - m), q ** np.arange(1, m + 1)])
    widths = (hi - lo) * rel / rel.sum()
    t = lo + np.concatenate([[0.0], np.cumsum(widths)])
    t[-1] = hi
    return t


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class Boundary:
    """Solved (or partially solved) boundary on a time grid.

    ``values`` may be ``+inf`` at a node where ``gamma`` itself is infinite
    (the end of a restricted horizon); unsolved nodes hold ``nan``.
    """

    cfg: ProblemConfig
    t_grid: np.ndarray
    values: np.ndarray
    orientation: Orientation
    regime: Regime
    scheme: str = "premium"
    table: CoeffTable = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.t_grid) - 1

    @property
    def gamma(self) -> np.ndarray:
        return self.table.gamma

    @property
    def h(self) -> float:
        """Step of a uniform grid (the first step otherwise)."""
        return float(self.t_grid[1] - self.t_grid[0])

    def index_of(self, t: float) -> int:
        from .errors import GridMismatch

        i = int(np.argmin(np.abs(self.t_grid - t)))
        if abs(self.t_grid[i] - t) > 1e-9 * (1.0 + abs(t)):
            raise GridMismatch(f"t={t!r} is not a node of the boundary grid")
        return i

    def in_stop(self, i: int, x):
        """Stopping-region indicator at node ``i``."""
        x = np.asarray(x, dtype=float)
        b = self.values[i]
        if self.orientation is Orientation.STOP_ABOVE:
            return x >= b
        return x <= b


@dataclass
class SolveReport:
    residuals: np.ndarray
    root_iterations: np.ndarray
    h: float
    bracket_expansions: int
    elapsed: float = 0.0
    backend: str = kernels.BACKEND
    gamma_violations: int = 0

    @property
    def max_normalized_residual(self) -> float:
        r = self.residuals[np.isfinite(self.residuals)]
        return float(np.max(np.abs(r))) if r.size else 0.0

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "max_normalized_residual": self.max_normalized_residual,
            "bracket_expansions": int(self.bracket_expansions),
            "root_iterations_total": int(np.sum(self.root_iterations)),
            "gamma_violations": int(self.gamma_violations),
            "elapsed_seconds": self.elapsed,
            "backend": self.backend,
        }


# --------------------------------------------------------------------------
# the discretized operator


class VolterraOperator:
    """Discretized value representation on a fixed grid.

    Holds the tabulated coefficients and evaluates, for node ``i`` and
    wealth ``x``, the value ``V_i(x)`` given boundary values on later nodes.

    In the premium scheme the first ``NEAR_PANELS`` panels after ``t_i`` are
    integrated by Gauss-Legendre rules with the boundary interpolated
    linearly inside each panel; the first panel uses the substitution
    ``s = h u^2`` to absorb the ``Phi(. / sqrt(s))`` layer of the indicator.
    The remaining panels use the trapezoid rule on grid nodes.
    """

    NEAR_PANELS = 4
    FIRST_NODES = 12
    PANEL_NODES = 8

    def __init__(self, cfg: ProblemConfig, t_grid: np.ndarray, orientation: Orientation,
                 scheme: str = "premium", table: CoeffTable | None = None):
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        self.cfg = cfg
        self.t = np.asarray(t_grid, dtype=float)
        self.n = len(self.t) - 1
        self.orientation = orientation
        self.above = orientation is Orientation.STOP_ABOVE
        self.scheme = scheme
        self.tab = table if table is not None else tabulate(cfg, self.t)
        self.a = cfg.theta - cfg.alpha - 0.5 * cfg.sigma**2
        self.mu = cfg.theta - cfg.alpha
        self._cache: dict[int, tuple] = {}
        if scheme == "premium":
            self._panel_rules()

    def _panel_rules(self):
        """Quadrature nodes inside every panel, with exact coefficients."""
        t, K = self.t, self.cfg.K
        h = np.diff(t)[:, None]
        xs, ws = np.polynomial.legendre.leggauss(self.FIRST_NODES)
        u = 0.5 * (xs + 1.0)
        lamS = u**2
        wS = h * 2.0 * u * 0.5 * ws  # ds = 2 h u du
        xn, wn = np.polynomial.legendre.leggauss(self.PANEL_NODES)
        lamN = 0.5 * (xn + 1.0)
        wN = h * 0.5 * wn
        tS = t[:-1, None] + h * lamS
        tN = t[:-1, None] + h * lamN
        both = tabulate(self.cfg, np.concatenate([tS.ravel(), tN.ravel()]))
        k = tS.size
        self._S = (tS, np.broadcast_to(lamS, tS.shape), wS * both.disc[:k].reshape(tS.shape),
                   both.g[:k].reshape(tS.shape), K * both.ell[:k].reshape(tS.shape))
        self._N = (tN, np.broadcast_to(lamN, tN.shape), wN * both.disc[k:].reshape(tN.shape),
                   both.g[k:].reshape(tN.shape), K * both.ell[k:].reshape(tN.shape))

    def _lognormal(self, s):
        return self.a * s, self.cfg.sigma * np.sqrt(s), np.exp(self.mu * s)

    def _node(self, i: int):
        """Per-node arrays that do not depend on ``b_i``."""
        hit = self._cache.get(i)
        if hit is not None:
            return hit
        tab, t, K = self.tab, self.t, self.cfg.K
        if self.scheme == "rectangle":
            s = t[i + 1:] - t[i]
            d = tab.disc[i + 1:] / tab.disc[i]
            w = np.diff(t[i:])
            m, v, growth = self._lognormal(s)
            wg = w * d * tab.g[i + 1:]
            wk = w * d * K * tab.ell[i + 1:]
            # indicator-free part of the rectangle sum, linear in x
            slope = float(np.sum(w * d * (tab.beta[i + 1:] - tab.g[i + 1:]) * growth))
            const = float(np.sum(wk))
            slope += d[-1] * tab.f[-1] * growth[-1]
            const += d[-1] * tab.f[-1] * K
            out = (np.ascontiguousarray(m), np.ascontiguousarray(v), np.ascontiguousarray(growth),
                   np.ascontiguousarray(wg), np.ascontiguousarray(wk), (slope, const))
        else:
            near = min(self.NEAR_PANELS, self.n - i)
            d0 = tab.disc[i]
            tS, lamS, wdS, gS, kS = (a[i] for a in self._S)
            first = (self._lognormal(tS - t[i]), wdS * gS / d0, wdS * kS / d0, lamS)
            tN, lamN, wdN, gN, kN = (a[i + 1:i + near] for a in self._N)
            mid = (self._lognormal((tN - t[i]).ravel()), (wdN * gN).ravel() / d0,
                   (wdN * kN).ravel() / d0, self._N[1][0])
            j = np.arange(i + near, self.n + 1)
            dt = np.diff(t)
            w = np.zeros(len(j))
            w[j < self.n] += 0.5 * dt[j[j < self.n]]
            w[j > i + near] += 0.5 * dt[j[j > i + near] - 1]
            d = tab.disc[j] / d0
            far = (self._lognormal(t[j] - t[i]), w * d * tab.g[j], w * d * K * tab.ell[j], j)
            out = (first, mid, far, near)
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[i] = out
        return out

    @staticmethod
    def _interp(b0, b1, lam):
        if np.isinf(b0) or np.isinf(b1):
            return np.full(np.shape(lam), np.inf)
        return b0 + (b1 - b0) * lam

    def G(self, i: int, x):
        return self.tab.f[i] * (np.asarray(x, dtype=float) - self.cfg.K)

    def _sum(self, x, c, mvg, wg, wk):
        m, v, growth = mvg
        return kernels.continuation_sum(x, np.ascontiguousarray(c, dtype=float), np.ascontiguousarray(m),
                                        np.ascontiguousarray(v), np.ascontiguousarray(growth),
                                        np.ascontiguousarray(wg), np.ascontiguousarray(wk), self.above)

    def value(self, i: int, x, b: np.ndarray, b_i=None) -> np.ndarray:
        """``V_i(x)`` from the boundary ``b`` (full-length values array).

        ``b[i]`` is replaced by ``b_i`` if given; ``b_i=None`` means the
        boundary passes through ``x`` at node ``i`` as in the root equation.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if i == self.n:
            return self.G(i, x)
        node = self._node(i)
        if self.scheme == "rectangle":
            m, v, growth, wg, wk, (slope, const) = node
            cont = self._sum(x, b[i + 1:], (m, v, growth), wg, wk)
            return slope * x - const + cont
        first, mid, far, near = node
        mvg, wg, wk, j = far
        total = self.G(i, x) + self._sum(x, b[j], mvg, wg, wk)
        if near > 1:
            mvg, wg, wk, lam = mid
            c = np.concatenate([self._interp(b[p], b[p + 1], lam) for p in range(i + 1, i + near)])
            total = total + self._sum(x, c, mvg, wg, wk)
        mvg, wg, wk, lam = first
        if b_i is None:
            total = total + np.array([self._sum(np.array([xx]), self._interp(xx, b[i + 1], lam), mvg, wg, wk)[0]
                                      for xx in x])
        else:
            total = total + self._sum(x, self._interp(float(b_i), b[i + 1], lam), mvg, wg, wk)
        return total

    def residual(self, i: int, x, b: np.ndarray) -> np.ndarray:
        """``G(t_i, x) - V_i(x)`` with the boundary through ``x`` at node ``i``."""
        return self.G(i, x) - self.value(i, x, b, None)


# --------------------------------------------------------------------------
# public operations


def kernel_Y(cfg: ProblemConfig, t: float, x, s: float, c, orientation: Orientation):
    """Integrand of the time sum in the rectangle scheme.

    ``disc(t, s) [beta(t+s) E X_s - E H(t+s, X_s) 1{X_s in S}]`` where the
    stopping set is ``X <= c`` (StopBelow) or ``X > c`` (StopAbove).
    """
    from .coeffs import rate_beta

    g, ell = g_ell(cfg, t + s)
    beta = rate_beta(cfg, t + s)
    M = mean(cfg, x, s)
    PM = partial_mean_below(cfg, x, s, c)
    P = cdf_below(cfg, x, s, c)
    if orientation is Orientation.STOP_ABOVE:
        PM, P = M - PM, 1.0 - P
    return discount(cfg, t, s) * (beta * M - (g * PM + cfg.K * ell * P))


def terminal_value(cfg: ProblemConfig, regime: Regime | None = None) -> float:
    """``gamma`` at the effective horizon.

    A restricted horizon ending where ``g`` vanishes has ``gamma = +inf``
    there, which is returned as such.
    """
    regime = regime or classify(cfg)
    if regime.kind is RegimeKind.DETERMINISTIC_K0:
        return 0.0
    if not regime.solvable:
        raise DegenerateTerminal(f"no boundary in regime {regime.describe()}")
    _, hi = regime.effective_interval(cfg.T)
    g, ell = g_ell(cfg, hi)
    if abs(g) <= cfg.g_eps or (regime.t0 is not None and hi == regime.t0):
        if regime.kind is RegimeKind.RESTRICTED_HORIZON and hi == regime.t0 and cfg.K * ell < 0:
            return math.inf
        raise DegenerateTerminal("gamma is undefined at the effective horizon")
    val = -cfg.K * ell / g
    if not val > 0:
        raise DegenerateTerminal(f"gamma at the horizon is not positive ({val!r})")
    return float(val)


def new_boundary(cfg: ProblemConfig, n_steps: int, *, scheme: str = "premium",
                 refine_near_T: bool = False, regime: Regime | None = None) -> Boundary:
    """Unsolved boundary with only the terminal node set."""
    regime = regime or classify(cfg)
    if not regime.solvable:
        raise ConfigError(f"regime {regime.describe()} has no free boundary")
    lo, hi = regime.effective_interval(cfg.T)
    t = make_grid(lo, hi, n_steps, refine_near_T)
    tab = tabulate(cfg, t)
    vals = np.full(len(t), np.nan)
    vals[-1] = terminal_value(cfg, regime)
    return Boundary(cfg, t, vals, regime.orientation, regime, scheme, tab)


def _operator(b: Boundary) -> VolterraOperator:
    op = getattr(b, "_op", None)
    if op is None:
        op = VolterraOperator(b.cfg, b.t_grid, b.orientation, b.scheme, b.table)
        object.__setattr__(b, "_op", op)
    return op


def residual(cfg: ProblemConfig, i: int, x, partial: Boundary):
    """``G(t_i, x) - V_i(x)`` using ``partial.values[i+1:]`` as the future boundary."""
    op = _operator(partial)
    r = op.residual(i, x, partial.values)
    return float(r[0]) if np.ndim(x) == 0 else r


def solve_step(cfg: ProblemConfig, i: int, partial: Boundary, root_tol: float = ROOT_TOL,
               max_expansions: int = MAX_EXPANSIONS) -> tuple[float, int, int]:
    """Solve node ``i`` given later nodes.

    Returns ``(b_i, root_iterations, bracket_expansions)``. The bracket is
    anchored at ``gamma(t_i)`` and grown geometrically into the stopping
    side, starting from the neighbouring solved value. If that side holds no
    sign change the other side is searched as well, so a root on the wrong
    side of ``gamma`` is reported rather than hidden.
    """
    op = _operator(partial)
    future = partial.values
    cap = x_cap(cfg)
    gam = partial.table.gamma[i]
    above = op.above
    if above and (not np.isfinite(gam) or gam >= cap):
        return math.inf, 0, 0  # everything below gamma continues
    R = lambda x: float(op.residual(i, x, future)[0])
    anchor = float(np.clip(gam if np.isfinite(gam) else cap, X_FLOOR, cap))
    ra = R(anchor)
    landscape = [(anchor, ra)]
    if ra == 0.0:
        return anchor, 0, 0
    nxt = partial.values[i + 1]
    expansions = 0

    def search(direction: int):
        nonlocal expansions
        prev, rprev = anchor, ra
        if direction > 0:
            trial = max(nxt if np.isfinite(nxt) else anchor, anchor) * 1.01
        else:
            trial = min(nxt if np.isfinite(nxt) else anchor, anchor) * 0.99
        for _ in range(max_expansions):
            trial = min(max(trial, X_FLOOR), cap)
            rt = R(trial)
            landscape.append((trial, rt))
            if np.sign(rt) != np.sign(rprev):
                return (prev, trial) if prev < trial else (trial, prev)
            if trial in (X_FLOOR, cap):
                return None
            expansions += 1
            prev, rprev = trial, rt
            trial = trial * 2.0 if direction > 0 else trial * 0.5
        return None

    primary = 1 if above else -1
    br = search(primary) or search(-primary)
    if br is None:
        raise BracketFailure(
            f"no sign change of the residual at node {i} (t={partial.t_grid[i]:.6g}) within [{X_FLOOR:g}, {cap:g}]",
            node=i, landscape=sorted(landscape),
        )
    root, res = brentq(R, br[0], br[1], xtol=root_tol, rtol=max(root_tol, 4 * np.finfo(float).eps),
                       maxiter=200, full_output=True)
    return float(root), int(res.iterations), expansions


def solve(cfg: ProblemConfig, n_steps: int = 600, *, scheme: str = "premium", refine_near_T: bool = False,
          root_tol: float = ROOT_TOL, regime: Regime | None = None) -> tuple[Boundary, SolveReport]:
    """Backward sweep from the terminal condition ``b(T) = gamma(T)``."""
    t_start = time.perf_counter()
    b = new_boundary(cfg, n_steps, scheme=scheme, refine_near_T=refine_near_T, regime=regime)
    n = b.n
    iters = np.zeros(n + 1, dtype=int)
    total_exp = 0
    for i in range(n - 1, -1, -1):
        val, it, ex = solve_step(cfg, i, b, root_tol)
        b.values[i] = val
        iters[i] = it
        total_exp += ex
    res = audit(b)
    report = SolveReport(res, iters, float(b.t_grid[1] - b.t_grid[0]), total_exp,
                         time.perf_counter() - t_start, kernels.BACKEND, gamma_violations(b))
    return b, report


def audit(b: Boundary) -> np.ndarray:
    """Normalized residual ``|G - V| / (1 + |G|)`` at every solved node."""
    op = _operator(b)
    out = np.zeros(b.n + 1)
    for i in range(b.n):
        x = b.values[i]
        if not np.isfinite(x):
            continue
        r = op.residual(i, x, b.values)[0]
        out[i] = abs(r) / (1.0 + abs(op.G(i, x)))
    return out


def gamma_violations(b: Boundary, rel: float = 1e-6) -> int:
    """Number of nodes on the wrong side of ``gamma``."""
    gam = b.table.gamma
    ok = np.isfinite(gam) & np.isfinite(b.values)
    if b.orientation is Orientation.STOP_ABOVE:
        bad = b.values[ok] < gam[ok] * (1 - rel)
    else:
        bad = b.values[ok] > gam[ok] * (1 + rel)
    return int(np.count_nonzero(bad))
