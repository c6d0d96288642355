"""Error norms used by the reconstruction schemes and experiment tables."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .mesh import Grid1D, trapezoid_weights


def relative_l2(values: np.ndarray, reference: np.ndarray, weights: np.ndarray) -> float:
    """Weighted relative L2 distance; absolute distance if the reference is zero."""
    diff = np.asarray(values, dtype=float) - np.asarray(reference, dtype=float)
    num = float(np.sqrt(np.sum(weights * diff**2)))
    den = float(np.sqrt(np.sum(weights * np.asarray(reference, dtype=float) ** 2)))
    return num / den if den > 0 else num


def potential_error(q: Callable[[np.ndarray], np.ndarray], q_act: Callable[[np.ndarray], np.ndarray], grid: Grid1D) -> float:
    """Relative L2(0, L) error of a reconstructed potential."""
    w = trapezoid_weights(grid.node_count, grid.dx)
    x = grid.nodes
    return relative_l2(q(x), q_act(x), w)


def nonlinearity_error(
    f: Callable[[np.ndarray], np.ndarray],
    f_act: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    n_samples: int = 401,
) -> float:
    """Relative L2 error of a reconstructed reaction term over the data range."""
    u = np.linspace(lo, hi, n_samples)
    w = trapezoid_weights(n_samples, (hi - lo) / (n_samples - 1))
    return relative_l2(f(u), f_act(u), w)
