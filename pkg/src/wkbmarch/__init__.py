"""Coarse-grid one-step integrators for eps^2 w'' + a(x) w = 0, 0 < eps << 1.

The solver preprocesses the oscillatory problem with a second-order phase
transformation and marches the slowly varying remainder with one-step
schemes of order 2 or 3 that stay accurate (and get better) as eps -> 0.
Independent oracle machinery reproduces every coefficient formula from
direct quadrature of the exact flow.
"""

from .coeffs import (
    AffineSquaredModel,
    CoefficientModel,
    ConstantModel,
    Problem,
    WkbAux,
    eval_b,
    eval_b_chain,
    eval_q3_aux,
    get_problem,
)
from .errors import (
    ConfigError,
    DerivativeOrderError,
    DomainError,
    EpsilonTooLargeError,
    InsufficientDataError,
    OracleBudgetError,
    OracleCrossValidationError,
    WkbError,
)
from .harness import ConvergenceRecord, StudyConfig, emit_outputs, estimate_order, run_study
from .oracle import (
    OscillatoryMatrixFn,
    ReferenceSolution,
    flow_oracle,
    picard_m,
    reference_solution,
    transfer_matrix,
)
from .phase import PhaseTable, build_phase_table, phase_increment, phi_prime
from .stepper import (
    StepContext,
    StepOperator,
    Trajectory,
    WKB2,
    WKB3,
    advance,
    assemble_step_operator,
    h_special,
    make_step_context,
    q1_term,
    q2_term,
    q3_term,
    simpson_weighted,
    solve_ivp,
)
from .transform import (
    P_INV,
    P_MATRIX,
    PhaseRotation,
    StateVec,
    u_from_z,
    u_initial,
    wave_from_u,
    z_from_u,
)

__version__ = "0.1.0"
