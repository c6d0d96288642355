"""Frozen Newton iteration with a sensitivity-based Jacobian.

The Jacobian is assembled once at the initial guess: one linearized solve
per basis direction, each observed through the case's observation operator
and stacked into a dense matrix. Every outer step then solves a Tikhonov
least-squares problem for the coefficient update. Freezing the evaluation
point trades per-step assembly cost for a (known) loss of local convergence
speed; a re-freeze interval is available for experimentation.

Residual rows are weighted by sqrt(dt) for trace samples and sqrt(dx) for
profile samples so that the algebraic norm approximates the continuous L2
norms of the data misfit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lstsq

from .coeffs import Nonlinearity, Potential
from .forward import ForwardSolveError, NewtonInnerConfig, ProblemSpec, solve_forward, solve_sensitivity
from .metrics import nonlinearity_error, potential_error
from .observe import ObservationData, observe, stack_observation
from .trace import IterationTrace


class IllConditionedError(RuntimeError):
    """Unregularized least-squares step on a rank-deficient Jacobian."""


@dataclass(frozen=True)
class NewtonConfig:
    """Regularization schedule and stopping rule of the outer iteration."""

    lam0: float = 1e-2
    nu: float = 0.8
    max_outer: int = 100
    tau: float = 1.2
    refreeze_every: int = 0     # 0 keeps the Jacobian frozen at the initial guess

    def __post_init__(self):
        if not self.lam0 > 0:
            raise ValueError("initial Tikhonov weight must be positive")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("lambda decay factor must lie in (0, 1]")
        if not self.tau > 1.0:
            raise ValueError("discrepancy factor must exceed 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class JacobianMatrix:
    """Stacked observation derivatives; q-directions first, then f-directions."""

    matrix: np.ndarray
    column_tags: list[tuple[str, int]]
    n_q: int
    n_f: int


@dataclass
class ReconstructionResult:
    q: Potential
    f: Nonlinearity
    trace: IterationTrace
    status: str
    extras: dict = field(default_factory=dict)


def _model_observation(
    spec: ProblemSpec,
    q: Potential,
    f: Nonlinearity,
    data: ObservationData,
    inner: NewtonInnerConfig | None,
) -> ObservationData:
    states = {
        which: solve_forward(spec, q, f, which=which, inner=inner) for which in spec.excitations
    }
    gamma = tuple(spec.grid.nodes[j] for j in data.gamma_indices)
    x0 = spec.grid.nodes[data.x0_index] if data.x0_index is not None else None
    return observe(states, data.case, gamma=gamma, x0=x0)


def assemble_jacobian(
    spec: ProblemSpec,
    q0: Potential,
    f0: Nonlinearity,
    data: ObservationData,
    inner: NewtonInnerConfig | None = None,
) -> JacobianMatrix:
    """One sensitivity solve per basis direction, observed and stacked.

    Column m is the observed linearized response to the m-th spatial hat;
    column n_q + n is the response to the n-th state hat. The spatial basis
    must vanish at the anchor point so that updates preserve the anchored
    potential value.
    """
    if q0.anchor is not None and q0.basis.excluded is None:
        raise ValueError("anchored potential needs a basis that excludes the anchor knot")

    states = {which: solve_forward(spec, q0, f0, which=which, inner=inner) for which in spec.excitations}
    gamma = tuple(spec.grid.nodes[j] for j in data.gamma_indices)
    x0 = spec.grid.nodes[data.x0_index] if data.x0_index is not None else None

    columns = []
    tags: list[tuple[str, int]] = []
    n_q = q0.basis.n_active
    n_f = f0.basis.n_active

    def observed_sensitivity(dq: Potential | None, df: Nonlinearity | None) -> np.ndarray:
        dus = {
            which: solve_sensitivity(spec, q0, f0, states[which], dq, df, which=which)
            for which in spec.excitations
        }
        obs = observe(dus, data.case, gamma=gamma, x0=x0)
        vec, _ = stack_observation(obs)
        return vec

    for m in range(n_q):
        e = np.zeros(n_q)
        e[m] = 1.0
        dq = Potential(q0.basis, e)
        try:
            columns.append(observed_sensitivity(dq, None))
        except ForwardSolveError as exc:
            raise ForwardSolveError(f"sensitivity solve failed for q-direction {m}: {exc}") from exc
        tags.append(("q", m))
    for n in range(n_f):
        e = np.zeros(n_f)
        e[n] = 1.0
        df = Nonlinearity(f0.basis, e, affine=(0.0, 0.0))
        try:
            columns.append(observed_sensitivity(None, df))
        except ForwardSolveError as exc:
            raise ForwardSolveError(f"sensitivity solve failed for f-direction {n}: {exc}") from exc
        tags.append(("f", n))

    matrix = np.column_stack(columns) if columns else np.zeros((_observation_size(data), 0))
    return JacobianMatrix(matrix=matrix, column_tags=tags, n_q=n_q, n_f=n_f)


def _observation_size(data: ObservationData) -> int:
    vec, _ = stack_observation(data)
    return vec.size


def tikhonov_solve(J: JacobianMatrix | np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of ||J s - rhs||^2 + lam ||s||^2 via a rank-revealing solve.

    The augmented least-squares system is equivalent to the normal equations
    with lam*I and keeps the conditioning of J rather than J'J.
    """
    A = J.matrix if isinstance(J, JacobianMatrix) else np.asarray(J, dtype=float)
    if lam < 0:
        raise ValueError("Tikhonov weight must be nonnegative")
    m, n = A.shape
    if lam == 0.0:
        sol, _, rank, _ = lstsq(A, rhs)
        if rank < n:
            raise IllConditionedError(
                f"lam=0 with rank-deficient matrix (rank {rank} < {n} columns)"
            )
        return sol
    A_aug = np.vstack([A, np.sqrt(lam) * np.eye(n)])
    b_aug = np.concatenate([rhs, np.zeros(n)])
    sol, _, _, _ = lstsq(A_aug, b_aug)
    return sol


def frozen_newton(
    spec: ProblemSpec,
    data: ObservationData,
    q0: Potential,
    f0: Nonlinearity,
    cfg: NewtonConfig | None = None,
    truth: tuple[Callable, Callable] | None = None,
    inner: NewtonInnerConfig | None = None,
) -> ReconstructionResult:
    """Frozen Newton reconstruction of the coefficient pair from observed data.

    The update directions live in the bases of the initial guess; the
    potential anchor is preserved exactly at every iterate because all its
    active hats vanish at the anchor knot. Stops at the discrepancy level
    tau * delta * ||y|| for noisy data, on step stagnation, or at max_outer.
    A diverging residual is flagged in ``status`` instead of raising so that
    parameter sweeps can record the failure and continue.
    """
    cfg = cfg or NewtonConfig()
    y, w = stack_observation(data)
    wsq = w  # row weights enter both the Jacobian and the residual
    t0 = time.perf_counter()

    jac = assemble_jacobian(spec, q0, f0, data, inner=inner)
    J = jac.matrix * wsq[:, None]
    solves = len(spec.excitations) * (jac.n_q + jac.n_f)

    q, f = q0, f0
    trace = IterationTrace()
    y_norm = float(np.linalg.norm(y * wsq))
    status = "max_iter"
    first_norm = None

    for k in range(cfg.max_outer):
        if cfg.refreeze_every and k > 0 and k % cfg.refreeze_every == 0:
            jac = assemble_jacobian(spec, q, f, data, inner=inner)
            J = jac.matrix * wsq[:, None]
            solves += len(spec.excitations) * (jac.n_q + jac.n_f)
        try:
            model = _model_observation(spec, q, f, data, inner)
        except ForwardSolveError:
            status = "failed"
            break
        solves += len(spec.excitations)
        fvec, _ = stack_observation(model)
        resid = (y - fvec) * wsq
        rnorm = float(np.linalg.norm(resid))
        rel = rnorm / y_norm if y_norm > 0 else rnorm
        if first_norm is None:
            first_norm = rnorm

        lam = cfg.lam0 * cfg.nu**k
        qe = fe = float("nan")
        if truth is not None:
            qe = potential_error(q, truth[0], spec.grid)
            fe = nonlinearity_error(f, truth[1], f.basis.lo, f.basis.hi)

        if data.delta > 0 and rnorm <= cfg.tau * data.delta * y_norm:
            trace.append(k, rel, qe, fe, lam, 0.0, 0, solves, time.perf_counter() - t0)
            status = "converged"
            break
        if not np.isfinite(rnorm) or (k >= 3 and rnorm > 10.0 * first_norm):
            trace.append(k, rel, qe, fe, lam, 0.0, 0, solves, time.perf_counter() - t0)
            status = "diverged"
            break

        step = tikhonov_solve(J, resid, lam)
        step_norm = float(np.linalg.norm(step))
        trace.append(k, rel, qe, fe, lam, step_norm, 0, solves, time.perf_counter() - t0)

        q = q.shifted(step[: jac.n_q])
        f = f.shifted(step[jac.n_q :])
        if step_norm < 1e-14 * (1.0 + float(np.linalg.norm(np.concatenate([q.coeffs, f.coeffs])))):
            status = "stagnated"
            break

    return ReconstructionResult(q=q, f=f, trace=trace, status=status, extras={"jacobian": jac, "forward_solves": solves})
