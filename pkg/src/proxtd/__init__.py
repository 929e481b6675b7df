"""proxtd: proximal and multistep (TD-style) solvers for x = Ax + b and friends.

Modules:
    linalg     dense LU solve, spectral-radius estimate, known-spectrum matrices
    proxmulti  proximal / multistep maps, extrapolation, anchored iterations
    galerkin   projections onto span(Phi) and exact low-dimensional systems
    mcsim      trajectory simulation, eligibility traces, LSTD/LSPE/TD estimators
    nonlinear  proximal point and forward-backward splitting for contractions
    pwlinear   piecewise-affine fixed points: greedy, monotone, randomized
    problems   problem file generation and JSON round-trip
    cli        gen / run / compare / verify command line
"""

from . import errors
from .galerkin import (
    LowDimSystem,
    ProjectionSpec,
    assemble_lowdim,
    build_projection,
    error_bound,
    lspe_iterate,
    lstd_solve,
    projection_from_aggregation,
    prox_projected_iterate,
    seminorm_project,
    sigma_regularized_iterate,
)
from .linalg import (
    SpectrumSpec,
    char_poly_at,
    inf_norm,
    lu_solve,
    make_similar,
    spectral_radius_estimate,
)
from .mcsim import (
    ChainSpec,
    EstimatorState,
    TdState,
    as_lowdim,
    default_proposal,
    merge_estimates,
    multistep_via_td,
    run_estimation,
    run_td_lambda,
    sample_trajectory,
    sim_lspe_step,
    sim_lstd,
    sim_prox_step,
    stationary_distribution,
    td_lambda_step,
    temporal_difference,
    update_estimates,
)
from .nonlinear import (
    NonlinearMap,
    SplitProblem,
    extrapolated_prox,
    fbs_solve,
    fbs_step,
    modulus_probe,
    nonlinear_prox,
    prox_solve,
)
from .problems import Problem, gen_problem, load_problem, save_problem
from .proxmulti import (
    AffineMap,
    IterateTrace,
    MultistepParam,
    apply_T,
    extrapolate_from_prox,
    gamma_iterate,
    geometric_rate,
    lambda_matrices,
    multistep_apply,
    proximal_apply,
    solve_fixed_point,
    vm_apply,
    w_mapping_apply,
)
from .pwlinear import (
    PiecewiseAffineMap,
    ProperReport,
    brute_force_xstar,
    composed_randomized_solve,
    contraction_modulus,
    greedy_select,
    linearized_iterate,
    monotone_solve,
    properness_report,
    pw_apply,
    randomized_solve,
    selected_apply,
    selected_map,
    selected_multistep,
)

__version__ = "0.1.0"
