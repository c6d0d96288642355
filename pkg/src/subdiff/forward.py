"""Implicit time stepping for the nonlinear reaction-subdiffusion equation.

Each step solves the nodal system

    sigma*b0*u^n - Lap u^n + q f(u^n) = r^n + sigma*b0*u^{n-1} - H_n

by damped Newton iterations with a tridiagonal-plus-diagonal Jacobian, where
H_n collects the fractional memory of all earlier increments. The history
term is assembled so that the stored snapshots satisfy the discrete identity

    caputo_apply(hist, n) - Lap u^n + q f(u^n) = r^n

exactly (to the inner solver tolerance); the reconstruction schemes build
their residuals from the very same discrete operator, which makes those
residuals vanish at the true coefficients on synthetic data.

The linearized (sensitivity) problem shares the stepping but needs a single
linear solve per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .caputo import CaputoWeights, SpaceTimeField, l1_weights
from .coeffs import Nonlinearity, Potential
from .mesh import BoundarySpec, Grid1D, TimeGrid, laplacian_bands

SourceLike = Callable[[np.ndarray, float], np.ndarray] | np.ndarray | float
InitialLike = Callable[[np.ndarray], np.ndarray] | np.ndarray | float


class ForwardSolveError(RuntimeError):
    """Inner Newton failure; carries the offending step and residual."""

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class NewtonInnerConfig:
    """Damped Newton settings for the per-step nonlinear solves."""

    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping factor must lie in (0, 1]")


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, order, boundary conditions and excitation data of one problem.

    ``sources`` and ``initials`` are indexed by excitation (1-based ``which``);
    each source may be a callable r(x_nodes, t), a precomputed (N+1, M+1)
    array, or a constant. Cases with two observations use excitations (1, 2),
    the mixed case uses (1,) only.
    """

    alpha: float
    grid: Grid1D
    times: TimeGrid
    bc: BoundarySpec
    sources: Sequence[SourceLike]
    initials: Sequence[InitialLike]
    excitations: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"fractional order must lie in (0, 1], got {self.alpha}")
        if self.excitations not in ((1,), (1, 2)):
            raise ValueError(f"excitation set must be (1,) or (1, 2), got {self.excitations}")
        need = max(self.excitations)
        if len(self.sources) < need or len(self.initials) < need:
            raise ValueError("sources/initials must cover every excitation")

    def source_at(self, which: int, t: float) -> np.ndarray:
        src = self.sources[which - 1]
        x = self.grid.nodes
        if callable(src):
            return np.broadcast_to(np.asarray(src(x, t), dtype=float), x.shape).copy()
        arr = np.asarray(src, dtype=float)
        if arr.ndim == 2:
            n = int(round(t / self.times.dt))
            return arr[n]
        return np.broadcast_to(arr, x.shape).copy()

    def initial(self, which: int) -> np.ndarray:
        u0 = self.initials[which - 1]
        x = self.grid.nodes
        if callable(u0):
            return np.asarray(u0(x), dtype=float).copy()
        return np.broadcast_to(np.asarray(u0, dtype=float), x.shape).copy()

    def weights(self) -> CaputoWeights:
        return l1_weights(self.alpha, self.times)


def _step_bands(lap: np.ndarray, scale: float, react: np.ndarray, dirichlet: tuple[bool, bool]) -> np.ndarray:
    """Bands of scale*I - Lap + diag(react), keeping Dirichlet identity rows."""
    ab = -lap.copy()
    ab[1] += scale + react
    if dirichlet[0]:
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
    if dirichlet[1]:
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
    return ab


def _apply_bands(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def solve_forward(
    spec: ProblemSpec,
    q: Potential,
    f: Nonlinearity,
    which: int = 1,
    inner: NewtonInnerConfig | None = None,
) -> SpaceTimeField:
    """Solve the nonlinear forward problem for one excitation; returns the history."""
    inner = inner or NewtonInnerConfig()
    grid, times = spec.grid, spec.times
    w = spec.weights()
    qv = np.asarray(q(grid.nodes), dtype=float)
    lap = laplacian_bands(grid, spec.bc)
    dirichlet = (spec.bc.left.is_dirichlet, spec.bc.right.is_dirichlet)
    scale = w.sigma * w.b[0]

    U = np.empty((times.N + 1, grid.node_count))
    U[0] = spec.initial(which)
    inc = np.empty((times.N, grid.node_count))

    for n in range(1, times.N + 1):
        rn = spec.source_at(which, times.t[n])
        hist = w.sigma * np.tensordot(w.b[1:n], inc[n - 2 :: -1], axes=(0, 0)) if n > 1 else 0.0
        rhs = rn + scale * U[n - 1] - hist

        u = U[n - 1].copy()

        def residual(v: np.ndarray) -> np.ndarray:
            g = scale * v - _apply_bands(lap, v) + qv * f(v) - rhs
            if dirichlet[0]:
                g[0] = v[0]
            if dirichlet[1]:
                g[-1] = v[-1]
            return g

        g = residual(u)
        norm = float(np.max(np.abs(g)))
        converged = norm <= inner.tol
        for _ in range(inner.max_iter):
            if converged:
                break
            ab = _step_bands(lap, scale, qv * f.eval_deriv(u), dirichlet)
            step = solve_banded((1, 1), ab, -g)
            damp = 1.0
            while True:
                u_try = u + damp * step
                g_try = residual(u_try)
                norm_try = float(np.max(np.abs(g_try)))
                if norm_try < norm or damp <= 2.0**-30:
                    break
                damp *= inner.damping
            u, g, norm = u_try, g_try, norm_try
            if not np.isfinite(norm):
                raise ForwardSolveError(
                    f"non-finite residual at step {n} (t={times.t[n]:.6g})", step=n, residual=norm
                )
            converged = norm <= inner.tol
        if not converged:
            raise ForwardSolveError(
                f"inner Newton did not reach tol={inner.tol:g} at step {n} "
                f"(t={times.t[n]:.6g}); residual {norm:.3e}",
                step=n,
                residual=norm,
            )
        U[n] = u
        inc[n - 1] = U[n] - U[n - 1]

    return SpaceTimeField(grid=grid, times=times, values=U)


def solve_sensitivity(
    spec: ProblemSpec,
    q0: Potential,
    f0: Nonlinearity,
    base: SpaceTimeField,
    dq: Potential | None,
    df: Nonlinearity | None,
    which: int = 1,
) -> SpaceTimeField:
    """Solve the linearized problem around a base state (zero initial data).

    The right-hand side is -dq*f0(u0) - q0*df(u0) with coefficients frozen at
    the base state; each step is a single banded solve.
    """
    grid, times = spec.grid, spec.times
    w = spec.weights()
    qv = np.asarray(q0(grid.nodes), dtype=float)
    lap = laplacian_bands(grid, spec.bc)
    dirichlet = (spec.bc.left.is_dirichlet, spec.bc.right.is_dirichlet)
    scale = w.sigma * w.b[0]

    dqv = np.asarray(dq(grid.nodes), dtype=float) if dq is not None else None

    D = np.zeros((times.N + 1, grid.node_count))
    inc = np.empty((times.N, grid.node_count))

    for n in range(1, times.N + 1):
        u0n = base.values[n]
        rhs = np.zeros(grid.node_count)
        if dqv is not None:
            rhs -= dqv * f0(u0n)
        if df is not None:
            rhs -= qv * df(u0n)
        hist = w.sigma * np.tensordot(w.b[1:n], inc[n - 2 :: -1], axes=(0, 0)) if n > 1 else 0.0
        rhs += scale * D[n - 1] - hist
        if dirichlet[0]:
            rhs[0] = 0.0
        if dirichlet[1]:
            rhs[-1] = 0.0

        ab = _step_bands(lap, scale, qv * f0.eval_deriv(u0n), dirichlet)
        try:
            D[n] = solve_banded((1, 1), ab, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - q0 f0' >= 0 keeps this regular
            raise ForwardSolveError(f"singular step matrix at step {n}", step=n) from exc
        inc[n - 1] = D[n] - D[n - 1]

    return SpaceTimeField(grid=grid, times=times, values=D)
