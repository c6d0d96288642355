"""Observation operators, noise injection, pre-smoothing and data checks.

Three observation settings are supported:

* case "a": boundary time traces of both excitations,
* case "b": final-time profiles of both excitations,
* case "c": one interior-or-boundary time trace plus the final-time profile
  of the first excitation.

Noisy profiles must never be differentiated raw; ``presmooth`` produces a
replacement with controlled discrete second differences via a roughness
penalty whose weight is matched to the recorded noise level by the
discrepancy criterion.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solveh_banded

from .caputo import SpaceTimeField
from .mesh import Grid1D, TimeGrid

CASES = ("a", "b", "c")


@dataclass(frozen=True)
class ObservationData:
    """Case-tagged observation payload.

    Traces live on the time grid, profiles on the spatial grid. ``traces``
    is keyed by excitation index and holds one row per observation point.
    """

    case: str
    grid: Grid1D
    times: TimeGrid
    traces: dict[int, np.ndarray] = field(default_factory=dict)   # (n_points, N+1)
    profiles: dict[int, np.ndarray] = field(default_factory=dict) # (M+1,)
    gamma_indices: tuple[int, ...] = ()
    x0_index: int | None = None
    delta: float = 0.0
    seed: int | None = None
    smoothed: bool = False

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown observation case {self.case!r}")
        nt = self.times.N + 1
        nx = self.grid.node_count
        for i, h in self.traces.items():
            if h.shape[-1] != nt:
                raise ValueError(f"trace {i} has {h.shape[-1]} samples, expected {nt}")
        for i, g in self.profiles.items():
            if g.shape != (nx,):
                raise ValueError(f"profile {i} has shape {g.shape}, expected ({nx},)")
        need_traces = {"a": (1, 2), "b": (), "c": (1,)}[self.case]
        need_profiles = {"a": (), "b": (1, 2), "c": (1,)}[self.case]
        if set(self.traces) != set(need_traces) or set(self.profiles) != set(need_profiles):
            raise ValueError(
                f"case {self.case!r} requires traces {need_traces} and profiles {need_profiles}"
            )


@dataclass(frozen=True)
class AdmissibilityReport:
    """Slope-domination and intersection diagnostics for a profile pair."""

    passes: bool
    monotone_1: bool
    monotone_2: bool
    C_g: float
    c_g: float
    n_intersections: int
    x_s: float | None
    s_star: float | None
    range_inclusion: bool
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class RangeCheck:
    ok: bool
    margin: float


def observe(
    states: dict[int, SpaceTimeField],
    case: str,
    gamma: tuple[float, ...] = (),
    x0: float | None = None,
) -> ObservationData:
    """Extract the case payload from solved histories.

    ``gamma`` lists observation point coordinates for the trace cases; every
    point must coincide with a grid node.
    """
    if case not in CASES:
        raise ValueError(f"unknown observation case {case!r}")
    some = next(iter(states.values()))
    grid, times = some.grid, some.times

    if case == "a":
        idx = tuple(grid.node_index(x) for x in gamma)
        if not idx:
            raise ValueError("case 'a' needs at least one observation point")
        traces = {i: states[i].values[:, list(idx)].T.copy() for i in (1, 2)}
        for i, h in traces.items():
            if np.max(np.abs(h)) == 0.0:
                warnings.warn(
                    f"trace of excitation {i} is identically zero (degenerate observation point)",
                    stacklevel=2,
                )
        return ObservationData(case, grid, times, traces=traces, gamma_indices=idx)
    if case == "b":
        profiles = {i: states[i].final.copy() for i in (1, 2)}
        return ObservationData(case, grid, times, profiles=profiles)
    if x0 is None:
        raise ValueError("case 'c' needs the trace point x0")
    j = grid.node_index(x0)
    if j == 0:
        raise ValueError("case 'c' requires x0 > 0")
    trace = states[1].values[:, j][None, :].copy()
    return ObservationData(
        case, grid, times, traces={1: trace}, profiles={1: states[1].final.copy()}, x0_index=j
    )


def _noisy(series: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    xi = rng.standard_normal(series.shape)
    nrm = np.linalg.norm(xi)
    if nrm == 0.0:
        return series.copy()
    return series + delta * np.linalg.norm(series) / nrm * xi


def add_noise(data: ObservationData, delta: float, seed: int) -> ObservationData:
    """Relative Gaussian noise, exactly delta in the 2-norm per payload series."""
    if delta < 0:
        raise ValueError("noise level must be nonnegative")
    if delta == 0.0:
        return replace(data, delta=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    traces = {i: _noisy(h, delta, rng) for i, h in sorted(data.traces.items())}
    profiles = {i: _noisy(g, delta, rng) for i, g in sorted(data.profiles.items())}
    return replace(data, traces=traces, profiles=profiles, delta=delta, seed=seed, smoothed=False)


def _smooth_series(y: np.ndarray, target: float) -> tuple[np.ndarray, bool]:
    """Second-difference penalized least squares, weight set by discrepancy.

    Solves (I + lam * D2' D2) w = y and bisects log(lam) until
    ||w - y|| matches the target. Returns (w, bracketed).
    """
    n = y.size
    if n < 5:
        return y.copy(), True

    # pentadiagonal normal matrix of the second-difference penalty
    main = np.zeros(n)
    main[2:-2] = 6.0
    main[[0, -1]] = 1.0
    main[[1, -2]] = 5.0
    off1 = np.full(n - 1, -4.0)
    off1[[0, -1]] = -2.0
    off2 = np.ones(n - 2)

    def solve(lam: float) -> np.ndarray:
        ab = np.zeros((3, n))
        ab[0, 2:] = lam * off2
        ab[1, 1:] = lam * off1
        ab[2, :] = 1.0 + lam * main
        return solveh_banded(ab, y, lower=False)

    def misfit(lam: float) -> float:
        return float(np.linalg.norm(solve(lam) - y))

    lo, hi = 1e-14, 1e-14
    while misfit(hi) < target and hi < 1e16:
        hi *= 10.0
    if misfit(hi) < target:
        warnings.warn(
            "discrepancy target not bracketed; returning least-smoothed candidate", stacklevel=3
        )
        return solve(lo), False
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        if misfit(mid) < target:
            lo = mid
        else:
            hi = mid
    return solve(np.sqrt(lo * hi)), True


def presmooth(data: ObservationData) -> ObservationData:
    """Pre-smoothing step for noisy payloads that will be differentiated.

    Noiseless data passes through unchanged. Every payload series (profiles
    and traces alike) is smoothed to the recorded noise level.
    """
    if data.case == "a":
        raise ValueError("pre-smoothing applies to cases with differentiated payloads (b, c)")
    if data.delta == 0.0:
        return data
    profiles = {}
    for i, g in sorted(data.profiles.items()):
        w, _ = _smooth_series(g, data.delta * float(np.linalg.norm(g)))
        profiles[i] = w
    traces = {}
    for i, h in sorted(data.traces.items()):
        rows = [
            _smooth_series(row, data.delta * float(np.linalg.norm(row)))[0] for row in np.atleast_2d(h)
        ]
        traces[i] = np.vstack(rows)
    return replace(data, profiles=profiles, traces=traces, smoothed=True)


def _bisect_pwl(x: np.ndarray, d: np.ndarray, j: int, tol: float = 1e-12) -> float:
    """Root of the piecewise-linear interpolant of d inside cell j by bisection."""
    a, b = x[j], x[j + 1]
    fa = d[j]
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = np.interp(m, x, d)
        if abs(b - a) < tol or fm == 0.0:
            return float(m)
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))


def check_admissibility(g1: np.ndarray, g2: np.ndarray, grid: Grid1D) -> AdmissibilityReport:
    """Verify slope domination and single-crossing of a final-profile pair.

    The pair is admissible when both profiles are strictly monotone, the
    first profile's slope dominates the second's everywhere by a ratio
    greater than one, the two profiles intersect exactly once inside the
    domain, and the second range is included in the first.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    x = grid.nodes
    s1 = np.diff(g1) / grid.dx
    s2 = np.diff(g2) / grid.dx

    monotone_1 = bool(np.all(s1 > 0) or np.all(s1 < 0))
    monotone_2 = bool(np.all(s2 > 0) or np.all(s2 < 0))
    c_g = float(np.min(np.abs(s2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(s1) / np.abs(s2)
    C_g = float(np.min(ratios[np.isfinite(ratios)])) if np.any(np.isfinite(ratios)) else float("nan")

    d = g1 - g2
    if np.max(np.abs(d)) == 0.0:
        return AdmissibilityReport(
            passes=False, monotone_1=monotone_1, monotone_2=monotone_2, C_g=C_g, c_g=c_g,
            n_intersections=grid.node_count, x_s=None, s_star=None, range_inclusion=True,
            reasons=("profiles coincide",),
        )
    roots: list[float] = []
    for j in range(grid.M):
        if d[j] == 0.0:
            roots.append(float(x[j]))
        elif d[j] * d[j + 1] < 0.0:
            roots.append(_bisect_pwl(x, d, j))
    if d[-1] == 0.0:
        roots.append(float(x[-1]))

    lo1, hi1 = float(np.min(g1)), float(np.max(g1))
    lo2, hi2 = float(np.min(g2)), float(np.max(g2))
    range_inclusion = bool(lo1 <= lo2 and hi2 <= hi1)

    reasons = []
    if not monotone_1:
        reasons.append("first profile not strictly monotone")
    if not monotone_2:
        reasons.append("second profile not strictly monotone")
    if not C_g > 1.0:
        reasons.append(f"slope domination fails (C_g={C_g:.4g} <= 1)")
    if not c_g > 0.0:
        reasons.append("second profile slope floor is zero")
    if len(roots) != 1:
        reasons.append(f"expected one intersection, found {len(roots)}")
    elif not (0.0 < roots[0] < grid.L):
        reasons.append("intersection sits on the boundary")
    if not range_inclusion:
        reasons.append("second range not included in first")

    x_s = roots[0] if len(roots) == 1 else None
    s_star = float(np.interp(x_s, x, g1)) if x_s is not None else None
    return AdmissibilityReport(
        passes=not reasons,
        monotone_1=monotone_1,
        monotone_2=monotone_2,
        C_g=C_g,
        c_g=c_g,
        n_intersections=len(roots),
        x_s=x_s,
        s_star=s_star,
        range_inclusion=range_inclusion,
        reasons=tuple(reasons),
    )


def check_range_condition(state: SpaceTimeField, h: np.ndarray) -> RangeCheck:
    """Whether the state's space-time range is covered by the trace's range."""
    h = np.asarray(h, dtype=float)
    umin, umax = float(np.min(state.values)), float(np.max(state.values))
    hmin, hmax = float(np.min(h)), float(np.max(h))
    margin = min(umin - hmin, hmax - umax)
    return RangeCheck(ok=margin >= 0.0, margin=margin)


def stack_observation(data: ObservationData) -> tuple[np.ndarray, np.ndarray]:
    """Flatten payload series into one vector with L2-consistent row weights.

    Trace samples carry sqrt(dt), profile samples sqrt(dx), so the Euclidean
    norm of the weighted stack approximates the continuous L2 norms. The
    stacking order (traces by excitation and point, then profiles by
    excitation) is the row order of the Jacobian assembly.
    """
    parts: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    sdt = np.sqrt(data.times.dt)
    sdx = np.sqrt(data.grid.dx)
    for i in sorted(data.traces):
        for row in np.atleast_2d(data.traces[i]):
            parts.append(row)
            weights.append(np.full(row.size, sdt))
    for i in sorted(data.profiles):
        g = data.profiles[i]
        parts.append(g)
        weights.append(np.full(g.size, sdx))
    return np.concatenate(parts), np.concatenate(weights)


def _fmt(v: float) -> str:
    return np.format_float_scientific(v, precision=16, trim="-")


def save_csv(data: ObservationData, directory: str | Path, stem: str) -> list[Path]:
    """Write the payload series; one file per abscissa (time and/or space).

    The header comment row records the case tag, noise level and seed so a
    saved payload is self-describing.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = f"# case={data.case} delta={data.delta:g} seed={'' if data.seed is None else data.seed}"
    paths = []

    if data.traces:
        path = directory / f"{stem}_traces.csv"
        with open(path, "w", newline="") as fh:
            fh.write(meta + "\n")
            writer = csv.writer(fh)
            cols = ["t"]
            series = []
            for i, h in sorted(data.traces.items()):
                for p, row in enumerate(np.atleast_2d(h)):
                    cols.append(f"h{i}_p{p}")
                    series.append(row)
            writer.writerow(cols)
            for n in range(data.times.N + 1):
                writer.writerow([_fmt(data.times.t[n])] + [_fmt(s[n]) for s in series])
        paths.append(path)

    if data.profiles:
        path = directory / f"{stem}_profiles.csv"
        with open(path, "w", newline="") as fh:
            fh.write(meta + "\n")
            writer = csv.writer(fh)
            cols = ["x"] + [f"g{i}" for i in sorted(data.profiles)]
            series = [data.profiles[i] for i in sorted(data.profiles)]
            writer.writerow(cols)
            for j in range(data.grid.node_count):
                writer.writerow([_fmt(data.grid.nodes[j])] + [_fmt(s[j]) for s in series])
        paths.append(path)

    return paths
