"""Uniform 1-D spatial/temporal grids, discrete Laplacian and quadrature.

All fields are plain numpy arrays with one value per grid node; the grid
objects carry the geometry. Operations here are pure functions and safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
IMPEDANCE = "impedance"

_BC_KINDS = (DIRICHLET, NEUMANN, IMPEDANCE)


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial mesh on (0, L) with M cells and M + 1 nodes.

    Parameters
    ----------
    L : float
        Domain length, must be positive.
    M : int
        Number of cells; at least 3 so that interior stencils exist.
    """

    L: float
    M: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got L={self.L}")
        if self.M < 3:
            raise ValueError(f"need at least 3 cells, got M={self.M}")

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def node_count(self) -> int:
        return self.M + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        # linspace pins the endpoints exactly: nodes[-1] == L in floats
        x = np.linspace(0.0, self.L, self.M + 1)
        x.setflags(write=False)
        return x

    def node_index(self, x: float) -> int:
        """Index of the grid node at position ``x``; raises if off-grid."""
        j = int(round(x / self.dx))
        if not (0 <= j <= self.M) or abs(self.nodes[j] - x) > 1e-9 * max(self.L, 1.0):
            raise ValueError(f"x={x} is not a node of the grid (dx={self.dx})")
        return j


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time mesh on (0, T) with N steps, nodes t_0 = 0 .. t_N = T."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"time horizon must be positive, got T={self.T}")
        if self.N < 1:
            raise ValueError(f"need at least 1 time step, got N={self.N}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @cached_property
    def t(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.N + 1)
        t.setflags(write=False)
        return t


@dataclass(frozen=True)
class BoundaryCondition:
    """One endpoint condition: Dirichlet, Neumann, or impedance with gamma >= 0.

    Dirichlet is the infinite-impedance limit and is treated by an identity
    row on the boundary unknown; Neumann is impedance with gamma = 0.
    """

    kind: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in _BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == IMPEDANCE and not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"impedance coefficient must be finite and >= 0, got {self.gamma}")

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == DIRICHLET

    @property
    def gamma_eff(self) -> float:
        """Impedance coefficient entering the ghost-node closure (0 for Neumann)."""
        return self.gamma if self.kind == IMPEDANCE else 0.0


@dataclass(frozen=True)
class BoundarySpec:
    left: BoundaryCondition
    right: BoundaryCondition

    @classmethod
    def dirichlet(cls) -> "BoundarySpec":
        return cls(BoundaryCondition(DIRICHLET), BoundaryCondition(DIRICHLET))

    @classmethod
    def neumann(cls) -> "BoundarySpec":
        return cls(BoundaryCondition(NEUMANN), BoundaryCondition(NEUMANN))

    @classmethod
    def impedance(cls, gamma_left: float, gamma_right: float) -> "BoundarySpec":
        return cls(BoundaryCondition(IMPEDANCE, gamma_left), BoundaryCondition(IMPEDANCE, gamma_right))


def build_grid(L: float, M: int, T: float, N: int) -> tuple[Grid1D, TimeGrid]:
    """Construct the spatial and temporal meshes in one call."""
    return Grid1D(L, M), TimeGrid(T, N)


def _check_field(v: np.ndarray, grid: Grid1D) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.node_count,):
        raise ValueError(f"field of shape {v.shape} does not live on a grid with {grid.node_count} nodes")
    return v


def laplacian_apply(
    v: np.ndarray,
    grid: Grid1D,
    bc: BoundarySpec | None = None,
    mode: str = "interior",
) -> np.ndarray:
    """Second-order discrete Laplacian of a nodal field.

    mode="interior" uses the central stencil at interior nodes and one-sided
    second differences at the two endpoints; this is the variant used to
    differentiate measured profiles (which must be pre-smoothed if noisy).

    mode="with-boundary-rows" requires ``bc`` and fills the endpoint rows
    with the boundary closure used by the solvers: an identity row for
    Dirichlet, and the second-order ghost-node closure for Neumann/impedance.
    """
    v = _check_field(v, grid)
    dx2 = grid.dx * grid.dx
    out = np.empty_like(v)
    out[1:-1] = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / dx2

    if mode == "interior":
        # one-sided second-order approximations of v'' at the endpoints
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dx2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dx2
        return out
    if mode == "with-boundary-rows":
        if bc is None:
            raise ValueError("mode='with-boundary-rows' requires a BoundarySpec")
        if bc.left.is_dirichlet:
            out[0] = v[0]
        else:
            g = bc.left.gamma_eff
            out[0] = 2.0 * (v[1] - (1.0 + grid.dx * g) * v[0]) / dx2
        if bc.right.is_dirichlet:
            out[-1] = v[-1]
        else:
            g = bc.right.gamma_eff
            out[-1] = 2.0 * (v[-2] - (1.0 + grid.dx * g) * v[-1]) / dx2
        return out
    raise ValueError(f"unknown mode {mode!r}")


def laplacian_bands(grid: Grid1D, bc: BoundarySpec) -> np.ndarray:
    """Banded matrix of the discrete Laplacian with boundary closure rows.

    Returns the (3, M+1) array in scipy ``solve_banded`` layout
    (superdiagonal, diagonal, subdiagonal). Dirichlet endpoint rows are
    identity rows; the caller keeps them as-is when assembling implicit
    systems, so Dirichlet values stay pinned.
    """
    n = grid.node_count
    dx2 = grid.dx * grid.dx
    ab = np.zeros((3, n))
    ab[0, 2:] = 1.0 / dx2          # superdiagonal, entry j is A[j-1, j]
    ab[1, 1:-1] = -2.0 / dx2       # diagonal
    ab[2, :-2] = 1.0 / dx2         # subdiagonal, entry j is A[j+1, j]

    if bc.left.is_dirichlet:
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
    else:
        g = bc.left.gamma_eff
        ab[1, 0] = -2.0 * (1.0 + grid.dx * g) / dx2
        ab[0, 1] = 2.0 / dx2
    if bc.right.is_dirichlet:
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
    else:
        g = bc.right.gamma_eff
        ab[1, -1] = -2.0 * (1.0 + grid.dx * g) / dx2
        ab[2, -2] = 2.0 / dx2
    return ab


def trapezoid_weights(n: int, spacing: float) -> np.ndarray:
    """Composite trapezoid quadrature weights for n equispaced nodes."""
    w = np.full(n, spacing)
    w[0] = w[-1] = 0.5 * spacing
    return w


def integrate(v: np.ndarray, grid: Grid1D) -> float:
    """Composite trapezoid value of the spatial integral of a nodal field."""
    v = _check_field(v, grid)
    return float(grid.dx * (v.sum() - 0.5 * (v[0] + v[-1])))


def integrate_time(v: np.ndarray, times: TimeGrid) -> float:
    """Composite trapezoid value of a time-series integral over (0, T)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (times.N + 1,):
        raise ValueError(f"series of shape {v.shape} does not live on a time grid with {times.N + 1} nodes")
    return float(times.dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def first_derivative(values: np.ndarray, spacing: float, order: int = 2) -> np.ndarray:
    """Finite-difference first derivative of an equispaced sample table.

    order=2 uses central differences with one-sided second-order endpoint
    formulas; order=4 uses five-point stencils throughout (needed when the
    derivative table feeds a fixed-point inversion and its error must stay
    well below the target tolerance).
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    h = spacing
    out = np.empty_like(v)
    if order == 2:
        if n < 3:
            raise ValueError("need at least 3 samples for a second-order derivative")
        out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
        return out
    if order == 4:
        if n < 5:
            raise ValueError("need at least 5 samples for a fourth-order derivative")
        out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
        out[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h)
        out[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h)
        out[-2] = (3.0 * v[-1] + 10.0 * v[-2] - 18.0 * v[-3] + 6.0 * v[-4] - v[-5]) / (12.0 * h)
        out[-1] = (25.0 * v[-1] - 48.0 * v[-2] + 36.0 * v[-3] - 16.0 * v[-4] + 3.0 * v[-5]) / (12.0 * h)
        return out
    raise ValueError(f"unsupported order {order}")
