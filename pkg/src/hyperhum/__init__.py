"""Boundary control of one-dimensional linear hyperbolic systems.

Optimal control times, boundary-matrix classes, an upwind solver with exact
discrete adjoint, matrix-free HUM control synthesis and observability
estimates.
"""

from .hum import (
    ControlProblem,
    GramianReport,
    ObservabilityEstimate,
    apply_FT,
    apply_FT_star,
    gramian_apply,
    observability_constant,
    solve_gramian,
    synthesize_exact_control,
    synthesize_null_control,
)
from .model import (
    CouplingField,
    HyperbolicSystem,
    InvalidSystemError,
    SpeedProfile,
    TimeReport,
    augment_system,
    in_class_B,
    in_class_Be,
    make_system,
    t_opt,
    tau,
    time_reverse_reduction,
    validate,
)
from .solver import (
    ControlSignal,
    Grid,
    StateField,
    cfl_timestep,
    free_evolution,
    solve_adjoint,
    solve_dual,
    solve_primal,
)

__version__ = "0.1.0"

__all__ = [
    "ControlProblem", "ControlSignal", "CouplingField", "GramianReport", "Grid",
    "HyperbolicSystem", "InvalidSystemError", "ObservabilityEstimate", "SpeedProfile",
    "StateField", "TimeReport", "apply_FT", "apply_FT_star", "augment_system",
    "cfl_timestep", "free_evolution", "gramian_apply", "in_class_B", "in_class_Be",
    "make_system", "observability_constant", "solve_adjoint", "solve_dual",
    "solve_gramian", "solve_primal", "synthesize_exact_control",
    "synthesize_null_control", "t_opt", "tau", "time_reverse_reduction", "validate",
]
