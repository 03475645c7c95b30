"""Variational problems on finite time scales.

Discrete calculus (delta and nabla) on explicit point sets, functionals
whose integrand sees a running integral state z, direct solvers for the
unconstrained and isoperimetric cases, stationarity certification through
Euler-Lagrange residuals, and the reflection duality that maps one flavor
onto the other.
"""

from .duality import (
    DualPair,
    duality_check,
    dualize_problem,
    dualize_scale,
    make_dual_pair,
    reflect_trajectory,
)
from .errors import (
    BadParameters,
    DomainError,
    DomainTooSmall,
    EmptyFeasibleSet,
    EndpointNotFree,
    ExpressionSyntaxError,
    FlavorMismatch,
    LineSearchFailure,
    NonFiniteInput,
    NoPointBelowA,
    NoPointBeyondB,
    NotConverged,
    ParseError,
    PointNotInScale,
    ScaleKindMismatch,
    ScaleMismatch,
    SearchSpaceTooLarge,
    TooFewPoints,
    TrajectoryDomainError,
    TsvarError,
    UnboundVariable,
    UnknownIdentifier,
    ValidationError,
)
from .expressions import evaluate, parse_expression, partial, to_string, variables_in
from .problem import (
    ProblemSpec,
    Trajectory,
    accumulate_z,
    carried_indices,
    make_trajectory,
    trajectory_norm,
    validate,
)
from .residuals import (
    ResidualReport,
    corollary_residual,
    el_residual,
    el_residual_integral_form,
    inner_integral,
    natural_boundary_residuals,
    variation_pairings,
)
from .solve import (
    Solution,
    SolveOptions,
    brute_force_oracle,
    classify_normality,
    evaluate_functionals,
    gradient,
    solve_isoperimetric,
    solve_unconstrained,
)
from .timescale import (
    GridFunction,
    TimeScale,
    build_scale,
    check_condition_H,
    derivative,
    generate_scale,
    integral,
    jump_operators,
    read_scale_file,
    write_scale_file,
)

__version__ = "0.1.0"

__all__ = [
    "TimeScale",
    "GridFunction",
    "build_scale",
    "generate_scale",
    "jump_operators",
    "derivative",
    "integral",
    "check_condition_H",
    "read_scale_file",
    "write_scale_file",
    "parse_expression",
    "evaluate",
    "partial",
    "variables_in",
    "to_string",
    "ProblemSpec",
    "Trajectory",
    "validate",
    "carried_indices",
    "make_trajectory",
    "accumulate_z",
    "trajectory_norm",
    "ResidualReport",
    "inner_integral",
    "el_residual",
    "el_residual_integral_form",
    "natural_boundary_residuals",
    "corollary_residual",
    "variation_pairings",
    "SolveOptions",
    "Solution",
    "evaluate_functionals",
    "gradient",
    "solve_unconstrained",
    "solve_isoperimetric",
    "classify_normality",
    "brute_force_oracle",
    "DualPair",
    "dualize_scale",
    "dualize_problem",
    "make_dual_pair",
    "reflect_trajectory",
    "duality_check",
    "TsvarError",
    "TooFewPoints",
    "NonFiniteInput",
    "BadParameters",
    "PointNotInScale",
    "DomainTooSmall",
    "ExpressionSyntaxError",
    "UnknownIdentifier",
    "UnboundVariable",
    "DomainError",
    "TrajectoryDomainError",
    "EndpointNotFree",
    "NoPointBeyondB",
    "NoPointBelowA",
    "ScaleKindMismatch",
    "NotConverged",
    "LineSearchFailure",
    "SearchSpaceTooLarge",
    "EmptyFeasibleSet",
    "FlavorMismatch",
    "ScaleMismatch",
    "ParseError",
    "ValidationError",
    "__version__",
]
