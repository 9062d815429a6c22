"""Gompertz-Makeham hazards, survival curves and life annuity factors.

All functions accept scalar or array ages and broadcast with numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, QuadratureTailError

if TYPE_CHECKING:  # pragma: no cover
    from .coeffs import ProblemConfig

TAIL_TOL = 1e-9
SURVIVAL_TOL = 1e-8
LIMIT_AGE = 130.0
PANEL_NODES = 8
MAX_TRUNCATION = 5000.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(PANEL_NODES)


@dataclass(frozen=True)
class GompertzMakeham:
    """Hazard ``A + B * C**age`` (rates per year)."""

    A: float = 0.00055845
    B: float = 0.000025670
    C: float = 1.1011

    def __post_init__(self):
        if not (self.A >= 0 and self.B >= 0):
            raise ConfigError("Gompertz-Makeham A and B must be nonnegative")
        if not 1 < self.C < math.inf:
            raise ConfigError("Gompertz-Makeham C must exceed 1")


@dataclass(frozen=True)
class MortalityLaw:
    """A Gompertz-Makeham base hazard scaled by ``1 + proportional_load``."""

    base: GompertzMakeham = GompertzMakeham()
    proportional_load: float = 0.0

    def __post_init__(self):
        if not -1 < self.proportional_load < math.inf:
            raise ConfigError("proportional load must exceed -1")

    @property
    def scale(self) -> float:
        return 1.0 + self.proportional_load

    def with_load(self, load: float) -> MortalityLaw:
        return MortalityLaw(self.base, load)


@dataclass(frozen=True)
class AnnuityQuadrature:
    """Composite Gauss-Legendre rule on ``[0, truncation_horizon]``.

    One panel per year, ``PANEL_NODES`` nodes per panel.
    """

    truncation_horizon: float
    node_count: int
    scheme: str = "gauss-legendre-composite"

    def __post_init__(self):
        if self.node_count < 16:
            raise ConfigError("node_count must be at least 16")
        if self.truncation_horizon <= 0:
            raise ConfigError("truncation horizon must be positive")

    @classmethod
    def for_age(cls, law: MortalityLaw, discount: float, age: float) -> AnnuityQuadrature:
        """Pick the truncation horizon for the youngest age in ``age``.

        The horizon is the smallest multiple of five years reaching age 130
        whose survival is below ``SURVIVAL_TOL`` and whose discarded tail
        bound is below ``TAIL_TOL``. Without a Gompertz term only the tail
        bound is required.
        """
        a0 = float(np.min(age))
        U = 5.0 * math.ceil(max(LIMIT_AGE - a0, 5.0) / 5.0)
        while U <= MAX_TRUNCATION:
            p = float(survival(law, a0, U))
            tail = p * math.exp(-discount * U) / discount
            # the survival target only makes sense for an exploding hazard
            if tail <= TAIL_TOL and (p < SURVIVAL_TOL or law.base.B == 0.0):
                break
            U += 5.0
        return cls(U, int(round(U)) * PANEL_NODES)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        panels = self.node_count // PANEL_NODES
        width = self.truncation_horizon / panels
        left = np.arange(panels) * width
        u = (left[:, None] + 0.5 * width * (_GL_X[None, :] + 1.0)).ravel()
        w = np.tile(0.5 * width * _GL_W, panels)
        return u, w


def hazard(law: MortalityLaw, age):
    """Force of mortality ``(1+load)(A + B C**age)``."""
    b = law.base
    return law.scale * (b.A + b.B * np.power(b.C, age))


def integrated_hazard(law: MortalityLaw, age, s):
    """Closed-form ``int_0^s hazard(age + u) du``."""
    b = law.base
    lnC = math.log(b.C)
    return law.scale * (b.A * s + b.B * np.power(b.C, age) * np.expm1(s * lnC) / lnC)


def survival(law: MortalityLaw, age, s):
    """Probability of surviving ``s`` more years from ``age``."""
    return np.exp(-integrated_hazard(law, age, s))


def annuity_factor(law: MortalityLaw, discount: float, age, quad: AnnuityQuadrature | None = None):
    """Continuous life annuity ``int_0^U e^{-discount u} survival(age, u) du``.

    Raises
    ------
    QuadratureTailError
        If the discarded tail ``survival(age, U) e^{-discount U} / discount``
        exceeds ``TAIL_TOL``.
    """
    if not discount > 0:
        raise ConfigError("annuity discount rate must be positive")
    age_arr = np.asarray(age, dtype=float)
    if quad is None:
        quad = AnnuityQuadrature.for_age(law, discount, age_arr)
    U = quad.truncation_horizon
    tail = survival(law, age_arr, U) * math.exp(-discount * U) / discount
    if np.any(tail > TAIL_TOL):
        raise QuadratureTailError(
            f"tail bound {float(np.max(tail)):.3e} exceeds {TAIL_TOL:g} at horizon {U:g}"
        )
    u, w = quad.nodes()
    flat = age_arr.reshape(-1, 1)
    vals = (np.exp(-discount * u - integrated_hazard(law, flat, u)) * w).sum(axis=1)
    return vals.reshape(age_arr.shape) if age_arr.ndim else float(vals[0])


def annuity_factor_derivative(law: MortalityLaw, discount: float, age, quad: AnnuityQuadrature | None = None):
    """Age derivative of the annuity factor, ``(discount + hazard) a - 1``."""
    a = annuity_factor(law, discount, age, quad)
    return (discount + hazard(law, np.asarray(age, dtype=float))) * a - 1.0


def moneys_worth(cfg: ProblemConfig, t):
    """Money's worth ``f = a^S / a^O`` and its time derivative.

    ``a^S`` discounts at ``rho`` under the subjective law and ``a^O`` at
    ``rho_hat`` under the objective law. Constant-f scenarios return the
    stored value with zero derivative.
    """
    t_arr = np.asarray(t, dtype=float)
    f_const = getattr(cfg.scenario, "f", None)
    if f_const is not None:
        f = np.full(t_arr.shape, float(f_const))
        fp = np.zeros(t_arr.shape)
    else:
        age = cfg.eta + t_arr
        aS = annuity_factor(cfg.subjective, cfg.rho, age)
        aO = annuity_factor(cfg.objective, cfg.rho_hat, age)
        dS = (cfg.rho + hazard(cfg.subjective, age)) * aS - 1.0
        dO = (cfg.rho_hat + hazard(cfg.objective, age)) * aO - 1.0
        f = aS / aO
        fp = f * (dS / aS - dO / aO)
    if t_arr.ndim == 0:
        return float(f), float(fp)
    return f, fp
