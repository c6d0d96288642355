"""Basis expansions for the unknown pair: spatial potential and state nonlinearity.

Both unknowns are represented with piecewise-linear (hat) expansions. Hats
are nodal, so an anchor constraint (a prescribed value at one point) is
imposed simply by dropping the hat at that knot: every retained function
vanishes there and the prescribed value is added as a constant offset.

The nonlinearity carries an affine part and continues with constant slope
outside its knot range, which keeps evaluation globally Lipschitz no matter
where an iterate's solution wanders.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid


@dataclass(frozen=True)
class Basis:
    """Hat-function basis on a strictly increasing knot vector.

    ``excluded`` is the index of the anchor knot whose hat is dropped from
    the active set; all active hats vanish at that knot.
    """

    knots: np.ndarray
    excluded: int | None = None

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("need at least two knots")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        if self.excluded is not None and not 0 <= self.excluded < knots.size:
            raise ValueError(f"excluded knot index {self.excluded} out of range")

    @property
    def n_knots(self) -> int:
        return self.knots.size

    @property
    def n_active(self) -> int:
        return self.knots.size - (self.excluded is not None)

    @property
    def active_indices(self) -> np.ndarray:
        idx = np.arange(self.knots.size)
        if self.excluded is None:
            return idx
        return np.delete(idx, self.excluded)

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    @property
    def hi(self) -> float:
        return float(self.knots[-1])

    def full_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values over all knots; the excluded knot contributes zero."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_active,):
            raise ValueError(f"expected {self.n_active} coefficients, got {coeffs.shape}")
        full = np.zeros(self.n_knots)
        full[self.active_indices] = coeffs
        return full

    def hat_matrix(self, points: np.ndarray) -> np.ndarray:
        """Matrix of active hat values at the given points (clipped to range)."""
        p = np.clip(np.asarray(points, dtype=float), self.lo, self.hi)
        n = self.n_knots
        cell = np.clip(np.searchsorted(self.knots, p, side="right") - 1, 0, n - 2)
        h = self.knots[cell + 1] - self.knots[cell]
        t = (p - self.knots[cell]) / h
        rows = np.arange(p.size)
        full = np.zeros((p.size, n))
        full[rows, cell] = 1.0 - t
        full[rows, cell + 1] += t
        return full[:, self.active_indices]


def uniform_basis(lo: float, hi: float, n_knots: int, exclude_at: float | None = None) -> Basis:
    """Uniform knots on [lo, hi]; optionally snap one knot to an anchor point.

    Snapping keeps the anchor constraint exact even when the requested anchor
    does not land on the uniform lattice.
    """
    if n_knots < 2:
        raise ValueError("need at least two knots")
    knots = np.linspace(lo, hi, n_knots)
    excluded = None
    if exclude_at is not None:
        if not lo <= exclude_at <= hi:
            raise ValueError(f"anchor {exclude_at} outside [{lo}, {hi}]")
        excluded = int(np.argmin(np.abs(knots - exclude_at)))
        knots[excluded] = exclude_at
        if not np.all(np.diff(knots) > 0):
            raise ValueError(f"anchor {exclude_at} too close to a neighbouring knot")
    return Basis(knots, excluded)


@dataclass(frozen=True)
class Potential:
    """Spatial coefficient q(x): hat expansion plus an optional anchored offset.

    With an anchor (x_bar, q_bar) the evaluated potential satisfies
    q(x_bar) = q_bar exactly for every coefficient vector, because all
    active hats vanish at the anchor knot.
    """

    basis: Basis
    coeffs: np.ndarray
    anchor: tuple[float, float] | None = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.basis.n_active,):
            raise ValueError(f"expected {self.basis.n_active} coefficients, got {coeffs.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def offset(self) -> float:
        return self.anchor[1] if self.anchor is not None else 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        full = self.basis.full_values(self.coeffs)
        return self.offset + np.interp(np.asarray(x, dtype=float), self.basis.knots, full)

    def shifted(self, delta: np.ndarray) -> "Potential":
        return replace(self, coeffs=self.coeffs + np.asarray(delta, dtype=float))

    @classmethod
    def constant(cls, basis: Basis, value: float) -> "Potential":
        """Constant potential; represented through the anchor offset if present."""
        if basis.excluded is not None:
            anchor = (float(basis.knots[basis.excluded]), value)
            return cls(basis, np.zeros(basis.n_active), anchor)
        return cls(basis, np.full(basis.n_active, value))

    @classmethod
    def from_samples(cls, knots: np.ndarray, values: np.ndarray) -> "Potential":
        """Piecewise-linear potential through sampled nodal values."""
        return cls(Basis(np.asarray(knots, dtype=float)), np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term f(u): affine part plus hats on a state-knot range.

    Evaluation is piecewise linear on [knots[0], knots[-1]] and continues
    with constant slope outside, so the function is globally Lipschitz with
    constant bounded by the largest local slope. The derivative uses the
    left-slope convention at interior knots.
    """

    basis: Basis
    coeffs: np.ndarray
    affine: tuple[float, float] = (0.0, 0.0)   # value and slope of f0 + s*u

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.basis.n_active,):
            raise ValueError(f"expected {self.basis.n_active} coefficients, got {coeffs.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def _full(self) -> np.ndarray:
        return self.basis.full_values(self.coeffs)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        full = self._full()
        knots = self.basis.knots
        f0, s = self.affine
        u_in = np.clip(u, knots[0], knots[-1])
        vals = f0 + s * u_in + np.interp(u_in, knots, full)
        slope_left = s + (full[1] - full[0]) / (knots[1] - knots[0])
        slope_right = s + (full[-1] - full[-2]) / (knots[-1] - knots[-2])
        vals = vals + np.minimum(u - knots[0], 0.0) * slope_left
        vals = vals + np.maximum(u - knots[-1], 0.0) * slope_right
        return float(vals[0]) if scalar else vals

    def eval_deriv(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        full = self._full()
        knots = self.basis.knots
        cell = np.clip(np.searchsorted(knots, u, side="left") - 1, 0, knots.size - 2)
        slopes = np.diff(full) / np.diff(knots)
        out = self.affine[1] + slopes[cell]
        return float(out[0]) if scalar else out

    def shifted(self, delta: np.ndarray) -> "Nonlinearity":
        return replace(self, coeffs=self.coeffs + np.asarray(delta, dtype=float))

    @classmethod
    def affine_only(cls, basis: Basis, f0: float, slope: float) -> "Nonlinearity":
        return cls(basis, np.zeros(basis.n_active), (f0, slope))

    @classmethod
    def from_samples(cls, knots: np.ndarray, values: np.ndarray) -> "Nonlinearity":
        return cls(Basis(np.asarray(knots, dtype=float)), np.asarray(values, dtype=float))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n_knots: int) -> "Nonlinearity":
        knots = np.linspace(lo, hi, n_knots)
        return cls(Basis(knots), np.asarray(fn(knots), dtype=float))

    @property
    def lipschitz_bound(self) -> float:
        full = self._full()
        slopes = self.affine[1] + np.diff(full) / np.diff(self.basis.knots)
        return float(np.max(np.abs(slopes)))


def cutoff(
    f: Callable[[np.ndarray], np.ndarray],
    fprime: Callable[[np.ndarray], np.ndarray],
    fsecond: Callable[[np.ndarray], np.ndarray],
    m_cut: float,
    knot_step: float = 1.0 / 512.0,
) -> Nonlinearity:
    """Growth cutoff: flatten f'' smoothly beyond |u| = m_cut.

    Builds f_M with f_M'' = eta_M * f'' for a C^2 polynomial bump eta_M that
    is 1 on [0, m_cut] and 0 beyond m_cut + 1, then integrates twice from 0
    so that f_M(0) = f(0) and f_M'(0) = f'(0). The result matches f on
    |u| <= m_cut, has constant slope for |u| >= m_cut + 1, and satisfies
    ||f_M''|| <= ||f''|| on the cut range. The output is sampled onto a hat
    representation; values at the knots carry only quadrature error.
    """
    if m_cut <= 0:
        raise ValueError(f"cutoff bound must be positive, got {m_cut}")
    reach = m_cut + 2.0
    n_half = int(np.ceil(reach / knot_step))
    knots = np.arange(-n_half, n_half + 1) * knot_step

    refine = 16
    fine = np.arange(-n_half * refine, n_half * refine + 1) * (knot_step / refine)
    i0 = n_half * refine                      # index of u = 0 on the fine grid

    a = np.abs(fine)
    eta = np.ones_like(fine)
    eta[a >= m_cut + 1.0] = 0.0
    ramp = (a > m_cut) & (a < m_cut + 1.0)
    t = a[ramp] - m_cut
    eta[ramp] = 1.0 - (6.0 * t**5 - 15.0 * t**4 + 10.0 * t**3)

    f0 = float(np.asarray(f(0.0)).reshape(-1)[0])
    fp0 = float(np.asarray(fprime(0.0)).reshape(-1)[0])

    g = eta * np.asarray(fsecond(fine), dtype=float)
    c1 = cumulative_trapezoid(g, fine, initial=0.0)
    fm_prime = fp0 + (c1 - c1[i0])
    c2 = cumulative_trapezoid(fm_prime, fine, initial=0.0)
    fm = f0 + (c2 - c2[i0])

    return Nonlinearity.from_samples(knots, fm[::refine])


def pack(q: Potential, f: Nonlinearity) -> np.ndarray:
    """Stack the coefficient vectors, potential block first."""
    return np.concatenate([q.coeffs, f.coeffs])


def unpack(vec: np.ndarray, q_like: Potential, f_like: Nonlinearity) -> tuple[Potential, Nonlinearity]:
    """Split a stacked vector back into a pair shaped like the templates."""
    vec = np.asarray(vec, dtype=float)
    nq = q_like.basis.n_active
    nf = f_like.basis.n_active
    if vec.shape != (nq + nf,):
        raise ValueError(f"expected a stacked vector of length {nq + nf}, got {vec.shape}")
    q = replace(q_like, coeffs=vec[:nq])
    f = replace(f_like, coeffs=vec[nq:])
    return q, f
