"""Discrete Caputo derivative of order alpha in (0, 1] on stored histories.

The quadrature is the classical piecewise-linear (L1) discretization of the
Abel integral: with weights b_k = (k+1)^(1-alpha) - k^(1-alpha) and the scale
sigma = dt^(-alpha) / Gamma(2-alpha), the derivative at t_n is

    sigma * sum_{k=0..n-1} b_k * (u^{n-k} - u^{n-k-1})

applied node by node. For alpha = 1 the weights degenerate to (1, 0, 0, ...)
and the operator reduces exactly to the backward difference, so the integer
order case shares the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Grid1D, TimeGrid


@dataclass(frozen=True)
class CaputoWeights:
    """L1 weight table for one time grid and one differentiation order."""

    alpha: float
    dt: float
    b: np.ndarray       # b_k, k = 0 .. N-1; b_0 = 1, strictly decreasing for alpha < 1
    sigma: float        # dt^(-alpha) / Gamma(2 - alpha)


@dataclass(frozen=True)
class SpaceTimeField:
    """Full solution history u(x_j, t_n), snapshots stacked row-wise.

    The history is stored densely because the memory term of the fractional
    derivative needs every past snapshot.
    """

    grid: Grid1D
    times: TimeGrid
    values: np.ndarray  # shape (N+1, M+1)

    def __post_init__(self):
        expect = (self.times.N + 1, self.grid.node_count)
        if self.values.shape != expect:
            raise ValueError(f"history shape {self.values.shape} does not match grids {expect}")

    def snapshot(self, n: int) -> np.ndarray:
        return self.values[n]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def l1_weights(alpha: float, times: TimeGrid) -> CaputoWeights:
    """Weight table of the L1 quadrature for the given order and time grid."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"differentiation order must lie in (0, 1], got {alpha}")
    k = np.arange(times.N, dtype=float)
    b = (k + 1.0) ** (1.0 - alpha) - k ** (1.0 - alpha)
    if alpha == 1.0:
        # (k+1)^0 - k^0 evaluates to 1 - 1 for k >= 1; force the exact limit
        b = np.zeros(times.N)
        b[0] = 1.0
    sigma = times.dt ** (-alpha) / math.gamma(2.0 - alpha)
    b.setflags(write=False)
    return CaputoWeights(alpha=alpha, dt=times.dt, b=b, sigma=sigma)


def caputo_series(series: np.ndarray, w: CaputoWeights) -> np.ndarray:
    """Discrete Caputo derivative of a scalar time series at every t_n, n >= 1.

    Entry 0 is NaN: the scheme does not define the derivative at the initial
    time, and poisoning the slot surfaces accidental use.
    """
    v = np.asarray(series, dtype=float)
    n_nodes = v.size
    if n_nodes != w.b.size + 1:
        raise ValueError(f"series of length {n_nodes} does not match weights for N={w.b.size}")
    inc = np.diff(v)
    out = np.empty(n_nodes)
    out[0] = np.nan
    for n in range(1, n_nodes):
        out[n] = w.sigma * float(np.dot(w.b[:n], inc[n - 1 :: -1]))
    return out


def caputo_apply(hist: SpaceTimeField, n: int, w: CaputoWeights) -> np.ndarray:
    """Nodewise Caputo derivative of a stored history at time index n >= 1."""
    if n == 0:
        raise ValueError("the discrete Caputo derivative is undefined at the initial time")
    N = hist.times.N
    if not 1 <= n <= N:
        raise ValueError(f"time index {n} outside 1..{N}")
    if w.b.size != N or w.dt != hist.times.dt:
        raise ValueError("weights were built for a different time grid")
    inc = hist.values[1 : n + 1] - hist.values[:n]          # rows u^{j+1} - u^j, j = 0..n-1
    return w.sigma * np.tensordot(w.b[:n], inc[::-1], axes=(0, 0))


def caputo_final(hist: SpaceTimeField, w: CaputoWeights) -> np.ndarray:
    """Caputo derivative at the final time t_N."""
    return caputo_apply(hist, hist.times.N, w)
