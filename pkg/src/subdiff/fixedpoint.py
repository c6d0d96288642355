"""Fixed-point reconstruction schemes driven by the projected equation.

Projecting the discrete equation onto the final-time observation gives, at
the true pair, the nodal identity

    -D_t^alpha u(x, T) + Lap g(x) + r(x, T) = q(x) f(g(x)),

where the left side is computable from the iterate's history and the data.
In the final-time case (b) the logarithm of its absolute value splits the
product into log q + (log f)(g); subtracting the two excitations eliminates
q and a pair of small least-squares systems updates the anchored hat
expansions of log q and log f (either split into an f-step and a q-step, or
jointly as one block system). Reconstructions exp of these expansions are
strictly positive by construction.

The mixed case (c) needs no logarithm: the trace equation at the
observation point yields the f-update and the final-time equation yields q
by division or by an anchored projection.

Noisy data must pass through the pre-smoothing step first; the iteration
then runs unchanged on the smoothed payload (no extra regularization or
early stopping; smoothing alone counteracts the differentiation).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .caputo import SpaceTimeField, caputo_final, caputo_series
from .coeffs import Basis, Nonlinearity, Potential, uniform_basis
from .forward import ForwardSolveError, NewtonInnerConfig, ProblemSpec, solve_forward
from .mesh import laplacian_apply, trapezoid_weights
from .metrics import nonlinearity_error, potential_error
from .newton import ReconstructionResult
from .observe import ObservationData, check_admissibility, check_range_condition, presmooth
from .trace import IterationTrace

DEFAULT_Q_KNOTS = 21
DEFAULT_F_KNOTS = 16
STATE_RANGE_PAD = 0.05


class AdmissibilityError(RuntimeError):
    """Observation pair rejected by the slope/intersection checks."""

    def __init__(self, report):
        super().__init__("; ".join(report.reasons) or "admissibility check failed")
        self.report = report


class GramSingularError(RuntimeError):
    """A reconstruction Gram system is singular beyond the ridge."""


@dataclass(frozen=True)
class Anchors:
    """Known values removing the multiplicative ambiguity of the pair.

    Cases (a)/(b) anchor the potential at x_bar (and case (b) additionally
    the nonlinearity at s0); case (c) anchors the potential at the trace
    point, where q1 = q(x0).
    """

    xbar: float | None = None
    qbar: float | None = None
    s0: float | None = None
    f0: float | None = None
    q1: float | None = None


@dataclass(frozen=True)
class FxpConfig:
    variant: str = "split"              # split | split-check | overall
    update_state_before_q: bool = False
    max_iter: int = 30
    ridge: float = 1e-10
    log_floor: float = 1e-12
    div_floor: float = 1e-8             # smallest |f(g)| allowed in the division update
    f_update: str = "direct"            # case c: direct | incremental
    q_update: str = "projected"         # case c: division | projected
    f_at_trace: bool = False            # case c: evaluate f^k at h(t) instead of u^k(x0, t)
    stagnation_tol: float = 1e-12

    def __post_init__(self):
        if self.variant not in ("split", "split-check", "overall"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.f_update not in ("direct", "incremental"):
            raise ValueError(f"unknown f update mode {self.f_update!r}")
        if self.q_update not in ("division", "projected"):
            raise ValueError(f"unknown q update mode {self.q_update!r}")
        if not (self.ridge > 0 and self.log_floor > 0):
            raise ValueError("ridge and log floor must be positive")
        if self.variant == "split-check":
            object.__setattr__(self, "variant", "split")
            object.__setattr__(self, "update_state_before_q", True)


@dataclass(frozen=True)
class LogResidual:
    """Log of the projected-equation magnitude, with floor-clamp flags."""

    values: np.ndarray
    clamped: np.ndarray           # bool mask where the floor was applied
    weight_mask: np.ndarray       # 0 on rows whose projected equation is vacuous

    @property
    def n_clamped(self) -> int:
        return int(np.count_nonzero(self.clamped))


def log_residuals(
    spec: ProblemSpec,
    state: SpaceTimeField,
    g_smoothed: np.ndarray,
    which: int,
    log_floor: float = 1e-12,
) -> LogResidual:
    """Log-magnitude of the projected equation for one excitation.

    Uses the boundary-consistent discrete Laplacian of the (pre-smoothed)
    profile so that the residual matches the solver's own operator row by
    row; Dirichlet end rows carry no information and get zero weight.
    """
    w = spec.weights()
    val = (
        -caputo_final(state, w)
        + laplacian_apply(g_smoothed, spec.grid, spec.bc, mode="with-boundary-rows")
        + spec.source_at(which, spec.times.T)
    )
    mag = np.abs(val)
    clamped = mag < log_floor
    values = np.log(np.maximum(mag, log_floor))
    mask = np.ones_like(values)
    if spec.bc.left.is_dirichlet:
        mask[0] = 0.0
    if spec.bc.right.is_dirichlet:
        mask[-1] = 0.0
    return LogResidual(values=values, clamped=clamped, weight_mask=mask)


def state_knots_from_data(data: ObservationData, n_knots: int = DEFAULT_F_KNOTS, pad: float = STATE_RANGE_PAD) -> np.ndarray:
    """Uniform state knots covering the observed data range with padding."""
    series = [*data.profiles.values(), *data.traces.values()]
    lo = min(float(np.min(s)) for s in series)
    hi = max(float(np.max(s)) for s in series)
    width = hi - lo
    if width <= 0:
        raise ValueError("observed data range is degenerate")
    return np.linspace(lo - pad * width, hi + pad * width, n_knots)


def _solve_gram(A: np.ndarray, rhs: np.ndarray, ridge: float, label: str) -> np.ndarray:
    """Solve an SPD Gram system with a relative ridge on the diagonal."""
    d = np.diag(A).copy()
    floor = ridge * (np.max(d) if d.size and np.max(d) > 0 else 1.0)
    Ar = A + np.diag(ridge * d + floor)
    try:
        return cho_solve(cho_factor(Ar), rhs)
    except LinAlgError as exc:
        cond = float(np.linalg.cond(Ar))
        raise GramSingularError(f"{label} Gram system singular beyond ridge (cond~{cond:.2e})") from exc


def fxp_b_f_system(
    rt_diff: np.ndarray,
    g1: np.ndarray,
    g2: np.ndarray,
    theta: Basis,
    quad_w: np.ndarray,
    ridge: float = 1e-10,
) -> np.ndarray:
    """Least-squares f-update of the split scheme.

    Fits the anchored log-nonlinearity expansion to the difference of the
    two excitations' log residuals through the composed hat values
    theta(g1) - theta(g2). The Gram matrix is symmetric positive
    semidefinite by construction.
    """
    E = theta.hat_matrix(g1) - theta.hat_matrix(g2)
    A = E.T @ (quad_w[:, None] * E)
    rhs = E.T @ (quad_w * rt_diff)
    return _solve_gram(A, rhs, ridge, "f-update")


def fxp_b_q_update(
    rt1: np.ndarray,
    ftilde_at_g1: np.ndarray,
    chi: Basis,
    qbar: float,
    quad_w: np.ndarray,
    x_nodes: np.ndarray,
    ridge: float = 1e-10,
) -> np.ndarray:
    """Projection q-update of the split scheme onto the anchored spatial hats.

    The target is the first excitation's log residual minus log(qbar) and
    minus the freshly updated log-nonlinearity composed with g1.
    """
    target = rt1 - np.log(qbar) - ftilde_at_g1
    X = chi.hat_matrix(x_nodes)
    A = X.T @ (quad_w[:, None] * X)
    rhs = X.T @ (quad_w * target)
    return _solve_gram(A, rhs, ridge, "q-update")


def fxp_b_overall_step(
    rho1: np.ndarray,
    rho2: np.ndarray,
    g1: np.ndarray,
    g2: np.ndarray,
    chi: Basis,
    theta: Basis,
    quad_w: np.ndarray,
    x_nodes: np.ndarray,
    ridge: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """One joint block least-squares solve for both anchored expansions.

    ``rho_i`` are the log residuals already corrected by the anchor
    constants. Returns the spatial and state coefficient vectors.
    """
    X = chi.hat_matrix(x_nodes)
    T1 = theta.hat_matrix(g1)
    T2 = theta.hat_matrix(g2)
    Wd = quad_w[:, None]
    A_qq = 2.0 * X.T @ (Wd * X)
    A_ff = T1.T @ (Wd * T1) + T2.T @ (Wd * T2)
    A_qf = X.T @ (Wd * T1) + X.T @ (Wd * T2)
    r_q = X.T @ (quad_w * (rho1 + rho2))
    r_f = T1.T @ (quad_w * rho1) + T2.T @ (quad_w * rho2)
    A = np.block([[A_qq, A_qf], [A_qf.T, A_ff]])
    rhs = np.concatenate([r_q, r_f])
    sol = _solve_gram(A, rhs, ridge, "overall block")
    return sol[: chi.n_active], sol[chi.n_active :]


def _materialize_q(chi: Basis, a: np.ndarray, qbar: float) -> Potential:
    """Positive potential from the anchored log expansion, sampled on the knots."""
    vals = qbar * np.exp(chi.full_values(a))
    return Potential(Basis(chi.knots), vals)


def _materialize_f(theta: Basis, b: np.ndarray, f0: float) -> Nonlinearity:
    vals = f0 * np.exp(theta.full_values(b))
    return Nonlinearity(Basis(theta.knots), vals)


@dataclass
class _CaseBContext:
    spec: ProblemSpec
    data: ObservationData
    cfg: FxpConfig
    anchors: Anchors
    chi: Basis
    theta: Basis
    quad_w: np.ndarray
    inner: NewtonInnerConfig | None


def _case_b_context(
    spec: ProblemSpec,
    data: ObservationData,
    cfg: FxpConfig,
    anchors: Anchors,
    chi: Basis | None,
    theta: Basis | None,
    inner: NewtonInnerConfig | None,
    check: bool = True,
) -> _CaseBContext:
    if data.case != "b":
        raise ValueError("this scheme consumes final-time (case 'b') data")
    if anchors.xbar is None or anchors.qbar is None or anchors.s0 is None or anchors.f0 is None:
        raise ValueError("case (b) needs anchors (xbar, qbar) and (s0, f0)")
    if data.delta > 0 and not data.smoothed:
        data = presmooth(data)
    if check:
        report = check_admissibility(data.profiles[1], data.profiles[2], spec.grid)
        if not report.passes:
            raise AdmissibilityError(report)
    if chi is None:
        chi = uniform_basis(0.0, spec.grid.L, DEFAULT_Q_KNOTS, exclude_at=anchors.xbar)
    if theta is None:
        knots = state_knots_from_data(data)
        theta = Basis(knots)
    if theta.excluded is None:
        theta = uniform_basis(theta.lo, theta.hi, theta.n_knots, exclude_at=anchors.s0)
    quad_w = trapezoid_weights(spec.grid.node_count, spec.grid.dx)
    return _CaseBContext(spec, data, cfg, anchors, chi, theta, quad_w, inner)


def fxp_b_step(ctx: _CaseBContext, q, f) -> tuple[Potential, Nonlinearity, dict]:
    """One application of the final-time fixed-point map to the pair (q, f)."""
    spec, data, cfg = ctx.spec, ctx.data, ctx.cfg
    g1, g2 = data.profiles[1], data.profiles[2]
    states = {i: solve_forward(spec, q, f, which=i, inner=ctx.inner) for i in (1, 2)}
    rts = {i: log_residuals(spec, states[i], data.profiles[i], i, cfg.log_floor) for i in (1, 2)}
    w_fit = ctx.quad_w * rts[1].weight_mask
    solves = 2

    if cfg.variant == "overall":
        corr = np.log(ctx.anchors.qbar) + np.log(ctx.anchors.f0)
        a, b = fxp_b_overall_step(
            rts[1].values - corr, rts[2].values - corr, g1, g2,
            ctx.chi, ctx.theta, w_fit, spec.grid.nodes, cfg.ridge,
        )
    else:
        b = fxp_b_f_system(rts[1].values - rts[2].values, g1, g2, ctx.theta, w_fit, cfg.ridge)
        rt1 = rts[1]
        if cfg.update_state_before_q:
            f_check = _materialize_f(ctx.theta, b, ctx.anchors.f0)
            state1 = solve_forward(spec, q, f_check, which=1, inner=ctx.inner)
            rt1 = log_residuals(spec, state1, g1, 1, cfg.log_floor)
            solves += 1
        ftilde_at_g1 = np.log(ctx.anchors.f0) + ctx.theta.hat_matrix(g1) @ b
        a = fxp_b_q_update(
            rt1.values, ftilde_at_g1, ctx.chi, ctx.anchors.qbar, w_fit, spec.grid.nodes, cfg.ridge
        )

    q_new = _materialize_q(ctx.chi, a, ctx.anchors.qbar)
    f_new = _materialize_f(ctx.theta, b, ctx.anchors.f0)
    diag = {
        "states": states,
        "clamped": sum(rt.n_clamped for rt in rts.values()),
        "forward_solves": solves,
    }
    return q_new, f_new, diag


def _pair_step_norm(spec, q_old, q_new, f_old, f_new, theta: Basis) -> float:
    xq = spec.grid.nodes
    du = theta.knots
    return float(
        np.max(np.abs(q_new(xq) - q_old(xq))) + np.max(np.abs(f_new(du) - f_old(du)))
    )


def _data_misfit(data: ObservationData, states: dict[int, SpaceTimeField]) -> float:
    """Relative L2 misfit between observed payload and the model states."""
    num = 0.0
    den = 0.0
    for i, g in data.profiles.items():
        w = trapezoid_weights(g.size, data.grid.dx)
        num += float(np.sum(w * (states[i].final - g) ** 2))
        den += float(np.sum(w * g**2))
    cols = data.gamma_indices if data.case == "a" else (data.x0_index,)
    for i, h in data.traces.items():
        w = trapezoid_weights(data.times.N + 1, data.times.dt)
        for row, j in zip(np.atleast_2d(h), cols):
            model_row = states[i].values[:, j]
            num += float(np.sum(w * (model_row - row) ** 2))
            den += float(np.sum(w * row**2))
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def fxp_b_iterate(
    spec: ProblemSpec,
    data: ObservationData,
    q0: Potential | None = None,
    f0: Nonlinearity | None = None,
    cfg: FxpConfig | None = None,
    anchors: Anchors | None = None,
    chi: Basis | None = None,
    theta: Basis | None = None,
    truth: tuple[Callable, Callable] | None = None,
    inner: NewtonInnerConfig | None = None,
) -> ReconstructionResult:
    """Run the final-time fixed-point scheme from an initial guess.

    The default initial pair is q = 0 and f(u) = 4u. Iterates are recorded
    after every update; the loop stops at ``max_iter`` or once the update
    stalls below the stagnation tolerance.
    """
    cfg = cfg or FxpConfig()
    if anchors is None:
        raise ValueError("case (b) requires anchors")
    ctx = _case_b_context(spec, data, cfg, anchors, chi, theta, inner)
    data = ctx.data

    if q0 is None:
        q0 = Potential(Basis(ctx.chi.knots), np.zeros(ctx.chi.n_knots))
    if f0 is None:
        f0 = Nonlinearity.affine_only(Basis(ctx.theta.knots), 0.0, 4.0)

    q, f = q0, f0
    trace = IterationTrace()
    t0 = time.perf_counter()
    status = "max_iter"
    total_solves = 0

    for k in range(cfg.max_iter):
        try:
            q_new, f_new, diag = fxp_b_step(ctx, q, f)
        except ForwardSolveError:
            status = "failed"
            break
        total_solves += diag["forward_solves"]
        qe = fe = float("nan")
        if truth is not None:
            qe = potential_error(q, truth[0], spec.grid)
            fe = nonlinearity_error(f, truth[1], ctx.theta.lo, ctx.theta.hi)
        step = _pair_step_norm(spec, q, q_new, f, f_new, ctx.theta)
        trace.append(
            k, _data_misfit(data, diag["states"]), qe, fe, float("nan"), step,
            diag["clamped"], total_solves, time.perf_counter() - t0,
        )
        q, f = q_new, f_new
        if step < cfg.stagnation_tol:
            status = "stagnated"
            break

    # one extra solve pair records the final iterate's misfit and errors
    try:
        states = {i: solve_forward(spec, q, f, which=i, inner=ctx.inner) for i in (1, 2)}
        total_solves += 2
        qe = fe = float("nan")
        if truth is not None:
            qe = potential_error(q, truth[0], spec.grid)
            fe = nonlinearity_error(f, truth[1], ctx.theta.lo, ctx.theta.hi)
        trace.append(
            len(trace), _data_misfit(data, states), qe, fe, float("nan"), float("nan"),
            0, total_solves, time.perf_counter() - t0,
        )
    except ForwardSolveError:
        status = "failed"

    return ReconstructionResult(q=q, f=f, trace=trace, status=status, extras={"forward_solves": total_solves, "theta": ctx.theta, "chi": ctx.chi})


def fxp_c_f_update(
    spec: ProblemSpec,
    h: np.ndarray,
    state: SpaceTimeField,
    x0_index: int,
    q1: float,
    f_k: Nonlinearity,
    theta: Basis,
    mode: str = "direct",
    f_at_trace: bool = False,
    ridge: float = 1e-10,
) -> Nonlinearity:
    """Trace-equation f-update of the mixed-data scheme.

    The driving series is -D_t^alpha h + D_t^alpha u_k(x0, .) plus, in
    direct mode, the current reaction evaluated along the iterate's own
    trace (or along the data trace when ``f_at_trace`` is set). Incremental
    mode drops that term and adds the fitted correction to f_k instead.
    """
    if spec.times.N < 2:
        raise ValueError("need at least 2 time steps for the trace update")
    w = spec.weights()
    dh = caputo_series(h, w)[1:]
    uk_trace = state.values[:, x0_index]
    du = caputo_series(uk_trace, w)[1:]

    eval_states = h[1:] if f_at_trace else uk_trace[1:]
    if mode == "direct":
        bvec = -dh + du + q1 * f_k(eval_states)
    else:
        bvec = -dh + du

    quad = trapezoid_weights(spec.times.N, spec.times.dt)   # nodes t_1 .. t_N
    TH = theta.hat_matrix(h[1:])
    A = q1 * TH.T @ (quad[:, None] * TH)
    rhs = TH.T @ (quad * bvec)
    coeffs = _solve_gram(A, rhs, ridge, "trace f-update")

    if mode == "direct":
        return Nonlinearity(Basis(theta.knots), theta.full_values(coeffs))
    base = f_k(theta.knots)
    return Nonlinearity(Basis(theta.knots), base + theta.full_values(coeffs))


def fxp_c_q_update(
    spec: ProblemSpec,
    state: SpaceTimeField,
    g_smoothed: np.ndarray,
    f_new: Nonlinearity,
    q1: float,
    x0: float,
    chi: Basis | None = None,
    mode: str = "projected",
    div_floor: float = 1e-8,
    ridge: float = 1e-10,
) -> Potential:
    """Final-time q-update of the mixed-data scheme.

    Division mode evaluates the projected equation pointwise; projected mode
    fits the deviation from q1 with hats vanishing at x0, which enforces
    q(x0) = q1 exactly.
    """
    w = spec.weights()
    numer = (
        -caputo_final(state, w)
        + laplacian_apply(g_smoothed, spec.grid, spec.bc, mode="with-boundary-rows")
        + spec.source_at(1, spec.times.T)
    )
    denom = f_new(g_smoothed)
    bad = np.abs(denom) < div_floor
    if np.any(bad):
        nodes = np.nonzero(bad)[0]
        raise ZeroDivisionError(
            f"|f(g)| below {div_floor:g} at nodes {nodes.tolist()[:8]}{'...' if nodes.size > 8 else ''}"
        )
    aval = numer / denom

    if mode == "division":
        return Potential.from_samples(spec.grid.nodes, aval)
    if chi is None:
        chi = uniform_basis(0.0, spec.grid.L, DEFAULT_Q_KNOTS, exclude_at=x0)
    quad = trapezoid_weights(spec.grid.node_count, spec.grid.dx)
    X = chi.hat_matrix(spec.grid.nodes)
    A = X.T @ (quad[:, None] * X)
    rhs = X.T @ (quad * (aval - q1))
    a = _solve_gram(A, rhs, ridge, "profile q-update")
    return Potential(chi, a, anchor=(x0, q1))


def fxp_c_iterate(
    spec: ProblemSpec,
    data: ObservationData,
    q0: Potential | None = None,
    f0: Nonlinearity | None = None,
    cfg: FxpConfig | None = None,
    anchors: Anchors | None = None,
    theta: Basis | None = None,
    chi: Basis | None = None,
    truth: tuple[Callable, Callable] | None = None,
    inner: NewtonInnerConfig | None = None,
) -> ReconstructionResult:
    """Alternating f/q fixed-point reconstruction from mixed data.

    The range condition (the trace must sweep the state range of the whole
    field) is verified on the initial state; a violation is recorded as a
    warning and in the result extras rather than aborting, since a poor
    initial guess can violate it transiently.
    """
    cfg = cfg or FxpConfig(max_iter=40)
    if data.case != "c":
        raise ValueError("this scheme consumes mixed (case 'c') data")
    if anchors is None or anchors.q1 is None:
        raise ValueError("case (c) needs the anchor value q1 = q(x0)")
    if data.delta > 0 and not data.smoothed:
        data = presmooth(data)
    if spec.excitations != (1,):
        raise ValueError("case (c) uses the single excitation (1,)")

    x0 = spec.grid.nodes[data.x0_index]
    h = np.atleast_2d(data.traces[1])[0]
    g = data.profiles[1]

    if theta is None:
        theta = Basis(state_knots_from_data(data))
    if chi is None and cfg.q_update == "projected":
        chi = uniform_basis(0.0, spec.grid.L, DEFAULT_Q_KNOTS, exclude_at=x0)
    if q0 is None:
        q0 = Potential(Basis(spec.grid.nodes.copy()), np.zeros(spec.grid.node_count))
    if f0 is None:
        f0 = Nonlinearity.affine_only(Basis(theta.knots), 0.0, 4.0)

    q, f = q0, f0
    trace = IterationTrace()
    t0 = time.perf_counter()
    status = "max_iter"
    total_solves = 0
    range_ok = None

    for k in range(cfg.max_iter):
        try:
            state = solve_forward(spec, q, f, which=1, inner=inner)
        except ForwardSolveError:
            status = "failed"
            break
        total_solves += 1
        if range_ok is None:
            rc = check_range_condition(state, h)
            range_ok = rc.ok
            if not rc.ok:
                warnings.warn(
                    f"range condition violated on the initial state (margin {rc.margin:.3g})",
                    stacklevel=2,
                )

        qe = fe = float("nan")
        if truth is not None:
            qe = potential_error(q, truth[0], spec.grid)
            fe = nonlinearity_error(f, truth[1], theta.lo, theta.hi)

        try:
            f_new = fxp_c_f_update(
                spec, h, state, data.x0_index, anchors.q1, f, theta,
                mode=cfg.f_update, f_at_trace=cfg.f_at_trace, ridge=cfg.ridge,
            )
            state_q = state
            if cfg.update_state_before_q:
                state_q = solve_forward(spec, q, f_new, which=1, inner=inner)
                total_solves += 1
            q_new = fxp_c_q_update(
                spec, state_q, g, f_new, anchors.q1, x0, chi,
                mode=cfg.q_update, div_floor=cfg.div_floor, ridge=cfg.ridge,
            )
        except (ForwardSolveError, ZeroDivisionError, GramSingularError):
            status = "failed"
            trace.append(k, _data_misfit(data, {1: state}), qe, fe, float("nan"),
                         float("nan"), 0, total_solves, time.perf_counter() - t0)
            break

        step = float(
            np.max(np.abs(q_new(spec.grid.nodes) - q(spec.grid.nodes)))
            + np.max(np.abs(f_new(theta.knots) - f(theta.knots)))
        )
        trace.append(k, _data_misfit(data, {1: state}), qe, fe, float("nan"), step,
                     0, total_solves, time.perf_counter() - t0)
        q, f = q_new, f_new
        if step < cfg.stagnation_tol:
            status = "stagnated"
            break

    try:
        state = solve_forward(spec, q, f, which=1, inner=inner)
        total_solves += 1
        qe = fe = float("nan")
        if truth is not None:
            qe = potential_error(q, truth[0], spec.grid)
            fe = nonlinearity_error(f, truth[1], theta.lo, theta.hi)
        trace.append(len(trace), _data_misfit(data, {1: state}), qe, fe, float("nan"),
                     float("nan"), 0, total_solves, time.perf_counter() - t0)
    except ForwardSolveError:
        status = "failed"

    return ReconstructionResult(
        q=q, f=f, trace=trace, status=status,
        extras={"forward_solves": total_solves, "range_ok": range_ok, "theta": theta, "chi": chi},
    )
