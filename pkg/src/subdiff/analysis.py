"""Analysis lab: the log-ratio operator on reaction terms, its constructive
inverse, projected-equation operators, and empirical contraction estimates.

The central object is the map taking a positive reaction term f to

    Psi(f)(x) = log f(g1(x)) - log f(g2(x)),

whose linear part (acting on log f) can be inverted constructively: reading
the relation along s = g1(x) gives a one-point recursion for the derivative
table of log f that contracts with factor max|g2'/g1'| <= 1/C_g < 1 under
the admissibility conditions. Everything operates on the discrete grid with
piecewise-linear inversion of g1; accuracy follows the grid resolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .caputo import SpaceTimeField, caputo_final
from .coeffs import Basis, Nonlinearity, Potential, uniform_basis
from .fixedpoint import Anchors, FxpConfig, _case_b_context, fxp_b_step
from .forward import ProblemSpec, solve_forward
from .mesh import Grid1D, TimeGrid, first_derivative, laplacian_apply
from .metrics import nonlinearity_error  # noqa: F401  (re-exported for lab scripts)
from .observe import AdmissibilityReport, ObservationData, check_admissibility


@dataclass(frozen=True)
class PsiContext:
    """Discrete setting for the log-ratio operator over one profile pair."""

    grid: Grid1D
    g1: np.ndarray
    g2: np.ndarray
    report: AdmissibilityReport
    s0: float
    f0: float
    g1_prime: np.ndarray
    g2_prime: np.ndarray
    s_grid: np.ndarray            # ascending g1 values
    increasing: bool

    @property
    def lo(self) -> float:
        return float(self.s_grid[0])

    @property
    def hi(self) -> float:
        return float(self.s_grid[-1])

    def g1_inverse(self, s: float, tol: float = 1e-12) -> float:
        """Monotone piecewise-linear inverse of g1 by bisection."""
        x = self.grid.nodes
        a, b = x[0], x[-1]
        fa = float(np.interp(a, x, self.g1)) - s
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = float(np.interp(m, x, self.g1)) - s
            if abs(b - a) < tol or fm == 0.0:
                return float(m)
            if (fa < 0) == (fm < 0):
                a, fa = m, fm
            else:
                b = m
        return float(0.5 * (a + b))


def make_psi_context(
    g1: np.ndarray,
    g2: np.ndarray,
    grid: Grid1D,
    s0: float,
    f0: float,
    report: AdmissibilityReport | None = None,
) -> PsiContext:
    """Validate admissibility and precompute derivative tables for the lab."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if report is None:
        report = check_admissibility(g1, g2, grid)
    if not report.passes:
        raise ValueError(f"profile pair not admissible: {'; '.join(report.reasons)}")
    increasing = bool(g1[-1] > g1[0])
    s_grid = g1 if increasing else g1[::-1]
    lo, hi = float(s_grid[0]), float(s_grid[-1])
    if not lo <= s0 <= hi:
        raise ValueError(f"anchor state {s0} outside the first profile's range [{lo}, {hi}]")
    if not f0 > 0:
        raise ValueError("anchor value f0 must be positive")
    order = 4 if grid.node_count >= 5 else 2
    return PsiContext(
        grid=grid,
        g1=g1,
        g2=g2,
        report=report,
        s0=s0,
        f0=f0,
        g1_prime=first_derivative(g1, grid.dx, order=order),
        g2_prime=first_derivative(g2, grid.dx, order=order),
        s_grid=s_grid,
        increasing=increasing,
    )


def psi_apply(f: Nonlinearity | Callable[[np.ndarray], np.ndarray], ctx: PsiContext) -> np.ndarray:
    """Nodewise log-ratio of f along the two profiles; vanishes at the crossing."""
    v1 = np.asarray(f(ctx.g1), dtype=float)
    v2 = np.asarray(f(ctx.g2), dtype=float)
    if np.min(v1) <= 0 or np.min(v2) <= 0:
        raise ValueError("reaction term must be strictly positive on the profile ranges")
    return np.log(v1) - np.log(v2)


@dataclass
class PsiLinResult:
    """Derivative table of the linear-part preimage and its integral."""

    s: np.ndarray
    fprime: np.ndarray
    ftilde: np.ndarray            # integral of fprime with ftilde(s0) = 0
    iterations: int
    converged: bool
    contraction_ratios: list[float] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(self.contraction_ratios) if self.contraction_ratios else 0.0


def psi_lin_invert(
    b: np.ndarray,
    ctx: PsiContext,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> PsiLinResult:
    """Constructive preimage under the linear part of the log-ratio map.

    Iterates the derivative-table recursion read along s = g1(x): divide the
    derivative of the target field (plus the g2-shifted previous table) by
    the derivative of g1. The per-step contraction factor is bounded by
    max|g2'/g1'|, i.e. by 1/C_g for an admissible pair.
    """
    b = np.asarray(b, dtype=float)
    if ctx.report.x_s is not None:
        b_at_xs = float(np.interp(ctx.report.x_s, ctx.grid.nodes, b))
        scale = float(np.max(np.abs(b))) or 1.0
        if abs(b_at_xs) > 1e-6 * scale:
            warnings.warn(
                f"target field does not vanish at the crossing point (value {b_at_xs:.3g})",
                stacklevel=2,
            )
    order = 4 if ctx.grid.node_count >= 5 else 2
    bp = first_derivative(b, ctx.grid.dx, order=order)

    # everything below lives on the x-grid: phi[j] approximates (log f)'(g1(x_j))
    g2_on_s = ctx.g2 if ctx.increasing else ctx.g2[::-1]
    bp_s = bp if ctx.increasing else bp[::-1]
    g1p_s = ctx.g1_prime if ctx.increasing else ctx.g1_prime[::-1]
    g2p_s = ctx.g2_prime if ctx.increasing else ctx.g2_prime[::-1]

    phi = np.zeros_like(b)
    ratios: list[float] = []
    prev_change = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        phi_new = (bp_s + g2p_s * np.interp(g2_on_s, ctx.s_grid, phi)) / g1p_s
        change = float(np.max(np.abs(phi_new - phi)))
        if prev_change is not None and prev_change > 0:
            ratios.append(change / prev_change)
        prev_change = change
        phi = phi_new
        if change < tol:
            converged = True
            break
    if not converged:
        last = ratios[-1] if ratios else float("nan")
        raise RuntimeError(
            f"derivative-table iteration did not converge in {max_iter} steps "
            f"(last contraction ratio {last:.4f})"
        )

    ftilde = _cumtrapz(ctx.s_grid, phi)
    ftilde -= np.interp(ctx.s0, ctx.s_grid, ftilde)
    return PsiLinResult(s=ctx.s_grid.copy(), fprime=phi, ftilde=ftilde, iterations=it,
                        converged=converged, contraction_ratios=ratios)


def _cumtrapz(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def psi_invert(b: np.ndarray, ctx: PsiContext, tol: float = 1e-10, max_iter: int = 500) -> Nonlinearity:
    """Full inverse of the log-ratio map, anchored so that f(s0) = f0."""
    lin = psi_lin_invert(b, ctx, tol=tol, max_iter=max_iter)
    values = ctx.f0 * np.exp(lin.ftilde)
    return Nonlinearity(Basis(lin.s), values)


def s_operator(
    spec: ProblemSpec,
    q: Potential,
    f: Nonlinearity,
    data: ObservationData,
) -> tuple[np.ndarray, np.ndarray]:
    """Projected-equation fields of both excitations at the supplied profiles.

    At the true pair on synthetic data each component equals q * f(g_i) up
    to the solver tolerance; evaluated at perturbed pairs only the state
    derivative term changes, which is what the contraction studies measure.
    """
    if data.case != "b":
        raise ValueError("the projected-equation operator consumes final-time data")
    w = spec.weights()
    out = []
    for i in (1, 2):
        state = solve_forward(spec, q, f, which=i)
        g = data.profiles[i]
        val = (
            -caputo_final(state, w)
            + laplacian_apply(g, spec.grid, spec.bc, mode="with-boundary-rows")
            + spec.source_at(i, spec.times.T)
        )
        out.append(val)
    return out[0], out[1]


@dataclass
class ContractionEstimate:
    """Empirical Lipschitz ratios of the projected-equation and scheme maps."""

    rows: list[tuple[float, float, str, float]] = field(default_factory=list)  # (T, alpha, op, ratio)
    samples: int = 0
    fitted_rate: float = float("nan")   # exponent of the ratio decay in T at alpha = 1

    def max_ratio(self, T: float, alpha: float, op: str) -> float:
        vals = [r for (t, a, o, r) in self.rows if t == T and a == alpha and o == op]
        if not vals:
            raise KeyError(f"no rows for T={T}, alpha={alpha}, op={op}")
        return max(vals)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write("T,alpha,operator,max_ratio,fitted_rate\n")
            for T, alpha, op, ratio in self.rows:
                fh.write(f"{T:g},{alpha:g},{op},{ratio:.12e},{self.fitted_rate:.12e}\n")
        return path


def _w1inf(v: np.ndarray, dx: float) -> float:
    return max(float(np.max(np.abs(v))), float(np.max(np.abs(first_derivative(v, dx)))))


def _f_dist(f1: Nonlinearity, f2: Nonlinearity, knots: np.ndarray) -> float:
    vals = float(np.max(np.abs(f1(knots) - f2(knots))))
    slopes = float(np.max(np.abs(f1.eval_deriv(knots) - f2.eval_deriv(knots))))
    return max(vals, slopes)


def estimate_contraction(
    make_spec: Callable[[float, float], ProblemSpec],
    T_values: Sequence[float],
    alphas: Sequence[float],
    q_act: Callable[[np.ndarray], np.ndarray],
    f_act: Callable[[np.ndarray], np.ndarray],
    anchors: Anchors,
    radius: float = 0.05,
    samples: int = 4,
    seed: int = 0,
    include_scheme_map: bool = True,
) -> ContractionEstimate:
    """Sample empirical Lipschitz ratios over horizons and orders.

    ``make_spec(T, alpha)`` builds the forward problem for one cell of the
    sweep; synthetic final-time data is generated at the true pair, then
    pairs of perturbed coefficient pairs within the given radius are pushed
    through the projected-equation operator (and optionally one application
    of the split fixed-point map) and the output/input distance ratios are
    recorded. Identical sample pairs are skipped.
    """
    rng = np.random.default_rng(seed)
    est = ContractionEstimate(samples=samples)

    for alpha in alphas:
        for T in T_values:
            spec = make_spec(T, alpha)
            grid = spec.grid
            chi = uniform_basis(0.0, grid.L, 13, exclude_at=anchors.xbar)
            q_true = _as_potential(q_act, grid)
            f_true = _as_nonlinearity(f_act)
            states = {i: solve_forward(spec, q_true, f_true, which=i) for i in spec.excitations}
            data = ObservationData(
                case="b", grid=grid, times=spec.times,
                profiles={i: states[i].final.copy() for i in (1, 2)},
            )
            theta_knots = _theta_knots(data)
            q_base = q_true
            f_base = Nonlinearity(Basis(theta_knots), np.asarray(f_act(theta_knots), dtype=float))

            pairs = []
            for _ in range(samples):
                pairs.append(_perturb(q_base, f_base, chi, radius, rng))
            pairs.append((q_base, f_base))

            svals = {}
            for idx, (qp, fp) in enumerate(pairs):
                svals[idx] = s_operator(spec, qp, fp, data)

            for iidx in range(len(pairs)):
                for jidx in range(iidx + 1, len(pairs)):
                    qi, fi = pairs[iidx]
                    qj, fj = pairs[jidx]
                    dist = float(np.max(np.abs(qi(grid.nodes) - qj(grid.nodes)))) + _f_dist(fi, fj, theta_knots)
                    if dist == 0.0:
                        continue
                    ds = max(
                        _w1inf(svals[iidx][0] - svals[jidx][0], grid.dx),
                        _w1inf(svals[iidx][1] - svals[jidx][1], grid.dx),
                    )
                    est.rows.append((T, alpha, "S", ds / dist))

            if include_scheme_map:
                cfg = FxpConfig(variant="split", max_iter=1)
                ctx = _case_b_context(spec, data, cfg, anchors, None, None, None, check=True)
                tvals = {}
                for idx, (qp, fp) in enumerate(pairs):
                    tq, tf, _ = fxp_b_step(ctx, qp, fp)
                    tvals[idx] = (tq, tf)
                for iidx in range(len(pairs)):
                    for jidx in range(iidx + 1, len(pairs)):
                        qi, fi = pairs[iidx]
                        qj, fj = pairs[jidx]
                        dist = float(np.max(np.abs(qi(grid.nodes) - qj(grid.nodes)))) + _f_dist(fi, fj, ctx.theta.knots)
                        if dist == 0.0:
                            continue
                        tqi, tfi = tvals[iidx]
                        tqj, tfj = tvals[jidx]
                        dt = float(np.max(np.abs(tqi(grid.nodes) - tqj(grid.nodes)))) + _f_dist(tfi, tfj, ctx.theta.knots)
                        est.rows.append((T, alpha, "T", dt / dist))

    if 1.0 in [float(a) for a in alphas] and len(T_values) >= 2:
        Ts = sorted(set(float(T) for T in T_values))
        ratios = [est.max_ratio(T, 1.0, "S") for T in Ts]
        if all(r > 0 for r in ratios):
            slope = np.polyfit(Ts, np.log(ratios), 1)[0]
            est.fitted_rate = float(-slope)
    return est


def _as_potential(q_act: Callable, grid: Grid1D) -> Potential:
    return Potential.from_samples(grid.nodes.copy(), np.asarray(q_act(grid.nodes), dtype=float))


def _as_nonlinearity(f_act: Callable) -> Nonlinearity:
    # generous fixed range for generating the synthetic data
    knots = np.linspace(-2.0, 6.0, 801)
    return Nonlinearity(Basis(knots), np.asarray(f_act(knots), dtype=float))


def _theta_knots(data: ObservationData, n_knots: int = 16, pad: float = 0.05) -> np.ndarray:
    series = list(data.profiles.values())
    lo = min(float(np.min(s)) for s in series)
    hi = max(float(np.max(s)) for s in series)
    width = hi - lo
    return np.linspace(lo - pad * width, hi + pad * width, n_knots)


def _perturb(q_base: Potential, f_base: Nonlinearity, chi, radius: float, rng: np.random.Generator):
    a = rng.standard_normal(chi.n_active)
    dq_full = chi.full_values(a)
    scale = float(np.max(np.abs(dq_full))) or 1.0
    dq_full *= radius * rng.uniform(0.3, 1.0) / scale
    qp = Potential(q_base.basis, q_base.coeffs + np.interp(q_base.basis.knots, chi.knots, dq_full))

    c = rng.standard_normal(f_base.basis.n_knots)
    c -= c[f_base.basis.n_knots // 2]      # keep the mid-range value pinned
    scale = float(np.max(np.abs(c))) or 1.0
    c *= radius * rng.uniform(0.3, 1.0) / scale
    fp = Nonlinearity(f_base.basis, f_base.coeffs * np.exp(c))
    return qp, fp


def decay_check(state: SpaceTimeField) -> float:
    """Fitted exponential decay rate of the discrete time derivative.

    Fits log of the sup norm of (u^n - u^{n-1})/dt against t_n over the
    second half of the time window and returns the negated slope. For a
    pure eigenmode of the diffusion operator this recovers the eigenvalue.
    """
    times = state.times
    d = np.max(np.abs(np.diff(state.values, axis=0)), axis=1) / times.dt
    n0 = times.N // 2
    t = times.t[1:][n0:]
    dn = d[n0:]
    usable = dn > 0
    if int(np.count_nonzero(usable)) < 4:
        raise ValueError("fewer than 4 usable decay samples")
    slope = np.polyfit(t[usable], np.log(dn[usable]), 1)[0]
    return float(-slope)
