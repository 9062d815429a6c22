"""Value function and early exercise premium from a solved boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import ROOT_TOL, Boundary, _operator
from .coeffs import Orientation


@dataclass(frozen=True)
class ValueSurface:
    """``V`` and ``G`` on a ``(t, x)`` grid; ``stop[i, j]`` labels the stopping region."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    V: np.ndarray
    G: np.ndarray
    stop: np.ndarray

    @property
    def premium(self) -> np.ndarray:
        return self.V - self.G

    @property
    def labels(self) -> np.ndarray:
        return np.where(self.stop, "Stop", "Continue")

    def rows(self):
        """Flat ``(t, x, V, G, region)`` records for CSV output."""
        lab = self.labels
        for i, t in enumerate(self.t_grid):
            for j, x in enumerate(self.x_grid):
                yield float(t), float(x), float(self.V[i, j]), float(self.G[i, j]), str(lab[i, j])


def tolerance(G, root_tol: float = ROOT_TOL):
    """Admissible undershoot of ``V`` below ``G``."""
    return 10.0 * root_tol * (1.0 + np.abs(G))


def value_at(cfg, boundary: Boundary, t: float, x):
    """``V(t, x)`` at a grid node ``t``, from the same discretization as the solve.

    Raises
    ------
    GridMismatch
        If ``t`` is not a node of ``boundary.t_grid``.
    """
    if cfg is not None and cfg != boundary.cfg:
        raise ValueError("boundary was solved for a different configuration")
    i = boundary.index_of(t)
    op = _operator(boundary)
    out = op.value(i, x, boundary.values, boundary.values[i])
    return float(out[0]) if np.ndim(x) == 0 else out


def premium(cfg, boundary: Boundary, t: float, x):
    """Early exercise premium ``V - G``."""
    i = boundary.index_of(t)
    op = _operator(boundary)
    v = value_at(cfg, boundary, t, x)
    G = op.G(i, x)
    return v - (float(np.ravel(G)[0]) if np.ndim(x) == 0 else G)


def surface(cfg, boundary: Boundary, x_grid, t_indices=None) -> ValueSurface:
    """Evaluate ``V`` on the boundary nodes ``t_indices`` times ``x_grid``."""
    x_grid = np.asarray(x_grid, dtype=float)
    if t_indices is None:
        t_indices = np.arange(boundary.n + 1)
    t_indices = np.asarray(t_indices, dtype=int)
    op = _operator(boundary)
    V = np.empty((len(t_indices), len(x_grid)))
    Gv = np.empty_like(V)
    stop = np.empty(V.shape, dtype=bool)
    for r, i in enumerate(t_indices):
        V[r] = op.value(i, x_grid, boundary.values, boundary.values[i])
        Gv[r] = op.G(i, x_grid)
        stop[r] = boundary.in_stop(i, x_grid)
    return ValueSurface(boundary.t_grid[t_indices], x_grid, V, Gv, stop)


def surface_grid(boundary: Boundary, n_t: int = 60, n_x: int = 200, spread: float = 3.0):
    """Evenly spaced node indices and a uniform wealth grid around the boundary."""
    idx = np.unique(np.linspace(0, boundary.n, n_t).round().astype(int))
    b = boundary.values[np.isfinite(boundary.values)]
    lo, hi = float(np.min(b)), float(np.max(b))
    if boundary.orientation is Orientation.STOP_ABOVE:
        xs = np.linspace(lo / spread, hi * spread, n_x)
    else:
        xs = np.linspace(lo / (2 * spread), hi * spread, n_x)
    return idx, xs
