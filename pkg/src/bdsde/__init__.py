"""Solver library for backward doubly stochastic differential equations.

Forward Euler simulation of the diffusion, backward induction with
quadrature conditional expectations for the (Y, Z) pair under a frozen
backward-noise path, closed-form and fine-grid oracles, and a convergence
harness that verifies the scheme's mean-square error rates.
"""

from .model import (
    BDSDEProblem,
    LipschitzBounds,
    TimeGrid,
    ValidationReport,
    build_uniform_grid,
    validate_kappa_uniform,
    validate_problem,
)
from .rng import PathBundle, load_bundles, refine_bundle, sample_bundles, save_bundles
from .condexp import (
    GridFunction,
    QuadratureRule,
    expect,
    expect_weighted,
    gauss_hermite,
    interpolate,
    spatial_axis,
)
from .forward import (
    ForwardTrajectory,
    euler_step,
    exact_forward,
    simulate_forward,
    simulate_forward_many,
)
from .backward import (
    BackwardLayer,
    SchemeEvaluation,
    SchemeSolution,
    backward_step,
    evaluate_scheme,
    evaluate_scheme_many,
    solve_backward,
    terminal_layer,
)
from .oracle import (
    CaseId,
    ClosedFormCase,
    calibrate_sign,
    closed_form,
    fine_grid_reference,
    residual_check,
    z_l2_regularity,
)
from .harness import (
    ErrorReport,
    ExperimentConfig,
    emit_report,
    fit_rate,
    forward_rate,
    run_convergence,
)

__version__ = "0.1.0"
