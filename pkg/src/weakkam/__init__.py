"""Numerical weak-KAM toolkit on flat tori.

Discretizes convex-coercive Hamilton-Jacobi problems, solves the discounted
equation, computes Peierls barriers, Aubry sets and Mather measures, and
verifies at desk scale that the discounted solutions select a single
critical limit.
"""

from .action_barrier import (
    ActionKernel,
    AubryReport,
    BarrierMatrix,
    aubry_report,
    aubry_set,
    build_kernel,
    mather_classes,
    minplus_power,
    minplus_product,
    peierls_barrier,
    verify_subsolution,
)
from .discounted import (
    DiscountedOccupationMeasure,
    DiscountedSolution,
    TrajectorySample,
    backward_trajectory,
    calibration_residual,
    critical_value_estimate,
    discounted_occupation_measure,
    solve_discounted,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    EmptyAubryError,
    InfeasibleError,
    NoSublevelError,
    StencilError,
    TruncationError,
    UnboundedError,
    VelocityBoundError,
    WeakKamError,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    cli_dispatch,
    load_config,
    run_pipeline,
)
from .mather import (
    LimitFunctionResult,
    MatherSolveResult,
    OccupationMeasure,
    VerificationReport,
    closedness_residual,
    compute_u0,
    min_mean_cycle,
    solve_mather_lp,
    u0_mechanical,
    verify_limit,
)
from .models import (
    GridFunction,
    LagrangianSpec,
    StabilityBounds,
    TorusGrid,
    VelocityStencil,
    build_grid,
    cosine_potential,
    default_time_step,
    eval_hamiltonian,
    eval_lagrangian,
    legendre_transform,
    make_stencil,
    mechanical,
    stability_bounds,
    table_potential,
    tabulated,
    transport,
    zero_potential,
)

__version__ = "0.1.0"
