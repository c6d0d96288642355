"""Forward simulation and coefficient reconstruction for the 1-D
reaction-subdiffusion equation

    D_t^alpha u - Lap u + q(x) f(u) = r,    0 < alpha <= 1,

with identification of the pair (q, f) from overposed boundary/final-time
data via frozen Newton and projected-equation fixed-point schemes.
"""

from .analysis import (
    ContractionEstimate,
    PsiContext,
    PsiLinResult,
    decay_check,
    estimate_contraction,
    make_psi_context,
    psi_apply,
    psi_invert,
    psi_lin_invert,
    s_operator,
)
from .caputo import CaputoWeights, SpaceTimeField, caputo_apply, caputo_final, caputo_series, l1_weights
from .coeffs import Basis, Nonlinearity, Potential, cutoff, pack, uniform_basis, unpack
from .fixedpoint import (
    AdmissibilityError,
    Anchors,
    FxpConfig,
    GramSingularError,
    LogResidual,
    fxp_b_f_system,
    fxp_b_iterate,
    fxp_b_overall_step,
    fxp_b_q_update,
    fxp_c_f_update,
    fxp_c_iterate,
    fxp_c_q_update,
    log_residuals,
    state_knots_from_data,
)
from .forward import ForwardSolveError, NewtonInnerConfig, ProblemSpec, solve_forward, solve_sensitivity
from .mesh import (
    BoundaryCondition,
    BoundarySpec,
    Grid1D,
    TimeGrid,
    build_grid,
    first_derivative,
    integrate,
    integrate_time,
    laplacian_apply,
    trapezoid_weights,
)
from .metrics import nonlinearity_error, potential_error, relative_l2
from .newton import (
    IllConditionedError,
    JacobianMatrix,
    NewtonConfig,
    ReconstructionResult,
    assemble_jacobian,
    frozen_newton,
    tikhonov_solve,
)
from .observe import (
    AdmissibilityReport,
    ObservationData,
    RangeCheck,
    add_noise,
    check_admissibility,
    check_range_condition,
    observe,
    presmooth,
    save_csv,
    stack_observation,
)
from .trace import IterationTrace

__version__ = "0.1.0"
