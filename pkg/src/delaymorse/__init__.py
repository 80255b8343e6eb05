"""Morse decompositions for scalar delayed negative-feedback equations.

Numerical machinery for state-dependent delay equations
x'(t) = f(x(t), x(t - r(x_t))) with a single delayed negative feedback:
phase-space trajectories with dense output, three delay laws, a
method-of-steps integrator, the discrete sign-change functional V, root
counting for the linearization, and an empirical Morse classifier, all
deterministic run to run.
"""

from .delay import (
    ConstantDelay,
    DelayedArgumentMap,
    ImplicitDelay,
    NoRoot,
    NonConvergence,
    ThresholdDelay,
    affine_kernel,
    delay_eval,
    lag_affine,
    lag_echo,
    lag_mill,
    quadratic_kernel,
    table_kernel,
    validate_delay,
)
from .feedback import (
    FeedbackModel,
    NonNegativeB,
    coefficient_a,
    coefficient_b,
    linear_family,
    tanh_family,
    validate_feedback,
)
from .integrator import BoundViolation, IntegratorConfig, integrate, residual_check
from .lyapunov import (
    AllZero,
    V_CAP,
    is_regular,
    sign_changes,
    v_along,
    v_limit,
    v_trace,
    vfunc,
    write_vtrace_csv,
)
from .morse import (
    DiagnosticResult,
    MorseLabel,
    classify,
    iterated_zero_diagnostic,
    morse_report,
    vkey,
)
from .phase import (
    InsufficientHistory,
    OutOfDomain,
    PhaseSpace,
    SegmentView,
    Trajectory,
    lipschitz_estimate,
    segment,
    write_trajectory_csv,
)
from .scenario import (
    ConfigError,
    Scenario,
    ValidationError,
    load_scenario,
    parse_config,
    run_scenario,
    run_sweep,
    run_validate,
)
from .segments import PiecewiseLinearPath, SplitMix64, random_segment
from .spectrum import (
    ContourThroughRoot,
    Linearization,
    SpectrumReport,
    TransformedPath,
    analyze,
    count_unstable,
    linearize,
    n_star,
    smallest_odd_above,
    transform,
)

__version__ = "0.1.0"

__all__ = [
    "AllZero",
    "BoundViolation",
    "ConfigError",
    "ConstantDelay",
    "ContourThroughRoot",
    "DelayedArgumentMap",
    "DiagnosticResult",
    "FeedbackModel",
    "ImplicitDelay",
    "InsufficientHistory",
    "IntegratorConfig",
    "Linearization",
    "MorseLabel",
    "NoRoot",
    "NonConvergence",
    "NonNegativeB",
    "OutOfDomain",
    "PhaseSpace",
    "PiecewiseLinearPath",
    "Scenario",
    "SegmentView",
    "SpectrumReport",
    "SplitMix64",
    "ThresholdDelay",
    "Trajectory",
    "TransformedPath",
    "V_CAP",
    "ValidationError",
    "analyze",
    "affine_kernel",
    "classify",
    "coefficient_a",
    "coefficient_b",
    "count_unstable",
    "delay_eval",
    "integrate",
    "is_regular",
    "iterated_zero_diagnostic",
    "lag_affine",
    "lag_echo",
    "lag_mill",
    "linear_family",
    "linearize",
    "lipschitz_estimate",
    "load_scenario",
    "morse_report",
    "vkey",
    "n_star",
    "parse_config",
    "quadratic_kernel",
    "random_segment",
    "residual_check",
    "run_scenario",
    "run_sweep",
    "run_validate",
    "segment",
    "sign_changes",
    "smallest_odd_above",
    "table_kernel",
    "tanh_family",
    "transform",
    "v_along",
    "v_limit",
    "v_trace",
    "validate_delay",
    "validate_feedback",
    "vfunc",
    "write_trajectory_csv",
    "write_vtrace_csv",
]
