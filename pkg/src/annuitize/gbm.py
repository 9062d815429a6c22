"""Lognormal fund dynamics: closed-form truncated moments and exact paths.

The fund follows ``dX = (theta - alpha) X dt + sigma X dB``, so
``X_s = x exp(m + v Z)`` with ``m = (theta - alpha - sigma^2/2) s`` and
``v = sigma sqrt(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .coeffs import ProblemConfig
from .mortality import integrated_hazard

__all__ = [
    "GbmStep",
    "norm_cdf",
    "mean",
    "cdf_below",
    "partial_mean_below",
    "partial_mean_above",
    "discount",
    "standard_normals",
    "sample_paths",
    "sample_path",
]


def norm_cdf(z):
    """Standard normal CDF (erfc based, accurate in both tails)."""
    return ndtr(z)


@dataclass(frozen=True)
class GbmStep:
    """Log-drift ``m`` and log-volatility ``v`` over a horizon ``s``."""

    m: float
    v: float

    @classmethod
    def of(cls, cfg: ProblemConfig, s: float) -> GbmStep:
        if s < 0:
            raise ValueError("horizon must be nonnegative")
        return cls((cfg.theta - cfg.alpha - 0.5 * cfg.sigma**2) * s, cfg.sigma * math.sqrt(s))


def _d(cfg: ProblemConfig, x, s, c):
    s = np.asarray(s, dtype=float)
    m = (cfg.theta - cfg.alpha - 0.5 * cfg.sigma**2) * s
    v = cfg.sigma * np.sqrt(s)
    with np.errstate(divide="ignore"):
        d = (np.log(np.asarray(c, dtype=float) / np.asarray(x, dtype=float)) - m) / v
    return d, v


def mean(cfg: ProblemConfig, x, s):
    return np.asarray(x, dtype=float) * np.exp((cfg.theta - cfg.alpha) * np.asarray(s, dtype=float))


def cdf_below(cfg: ProblemConfig, x, s, c):
    """``P(X_s <= c | X_0 = x)`` for ``s > 0``."""
    d, _ = _d(cfg, x, s, c)
    return norm_cdf(d)


def partial_mean_below(cfg: ProblemConfig, x, s, c):
    """``E[X_s 1{X_s <= c}]``."""
    d, v = _d(cfg, x, s, c)
    return mean(cfg, x, s) * norm_cdf(d - v)


def partial_mean_above(cfg: ProblemConfig, x, s, c):
    """``E[X_s 1{X_s > c}]``, computed directly rather than by subtraction."""
    d, v = _d(cfg, x, s, c)
    return mean(cfg, x, s) * norm_cdf(v - d)


def discount(cfg: ProblemConfig, t, s):
    """Mortality-adjusted discount factor ``exp(-int_t^{t+s} r)``."""
    s = np.asarray(s, dtype=float)
    return np.exp(-cfg.rho * s - integrated_hazard(cfg.subjective, cfg.eta + np.asarray(t, dtype=float), s))


# --------------------------------------------------------------------------
# counter-based sampling

_TWO_M53 = 2.0**-53


def standard_normals(seed: int, first_path: int, n_paths: int, n_steps: int) -> np.ndarray:
    """Normals ``xi[p, k]`` for paths ``first_path .. first_path + n_paths - 1``.

    Draw ``(p, k)`` is a pure function of ``(seed, p, k)``: it is taken from
    the Philox stream at position ``p * stride + k`` where ``stride`` is
    ``n_steps`` rounded up to a whole counter block, so batches of paths can
    be generated in any order with identical results.
    """
    stride = 4 * ((n_steps + 3) // 4)
    bitgen = np.random.Philox(key=int(seed), counter=first_path * (stride // 4))
    raw = bitgen.random_raw(n_paths * stride).reshape(n_paths, stride)[:, :n_steps]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


def sample_paths(cfg: ProblemConfig, x: float, t_grid, seed: int, n_paths: int, first_path: int = 0) -> np.ndarray:
    """Exact GBM values on ``t_grid`` for a batch of paths, shape ``(n_paths, len(t_grid))``."""
    t_grid = np.asarray(t_grid, dtype=float)
    dt = np.diff(t_grid)
    if np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    xi = standard_normals(seed, first_path, n_paths, len(dt))
    incr = (cfg.theta - cfg.alpha - 0.5 * cfg.sigma**2) * dt + cfg.sigma * np.sqrt(dt) * xi
    out = np.empty((n_paths, len(t_grid)))
    out[:, 0] = x
    out[:, 1:] = x * np.exp(np.cumsum(incr, axis=1))
    return out


def sample_path(cfg: ProblemConfig, x: float, t_grid, seed: int, path_id: int = 0) -> np.ndarray:
    """One exact path; identical for identical ``(seed, path_id)``."""
    return sample_paths(cfg, x, t_grid, seed, 1, first_path=path_id)[0]
