"""Reconstruction of a space-time source component in a subdiffusion model
from lateral boundary observations."""

from .errors import (
    AssumptionViolationError,
    DegenerateDirectionError,
    DivergenceError,
    InvalidParameterError,
)
from .fractime import TimeGrid, caputo_apply, cq_weights, gamma_fn, rl_integral
from .harness import (
    ExperimentConfig,
    make_example,
    manufactured_solution,
    run_convergence_study,
    run_reconstruction,
    run_table,
    synthesize_data,
)
from .inversion import (
    InverseProblem,
    ReconstructionReport,
    cg_reconstruct,
    discrepancy_stop,
    error_metric,
    eval_J,
    eval_gradient,
    fixed_point_h,
    fixed_point_solve,
)
from .mesh import CoefficientSet, build_mesh, validate_coefficients
from .solver import (
    LateralObservation,
    Stepper,
    flux_top,
    solve_adjoint,
    solve_direct,
    trace_top,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolationError",
    "CoefficientSet",
    "DegenerateDirectionError",
    "DivergenceError",
    "ExperimentConfig",
    "InvalidParameterError",
    "InverseProblem",
    "LateralObservation",
    "ReconstructionReport",
    "Stepper",
    "TimeGrid",
    "build_mesh",
    "caputo_apply",
    "cg_reconstruct",
    "cq_weights",
    "discrepancy_stop",
    "error_metric",
    "eval_J",
    "eval_gradient",
    "fixed_point_h",
    "fixed_point_solve",
    "flux_top",
    "gamma_fn",
    "make_example",
    "manufactured_solution",
    "rl_integral",
    "run_convergence_study",
    "run_reconstruction",
    "run_table",
    "solve_adjoint",
    "solve_direct",
    "synthesize_data",
    "trace_top",
    "validate_coefficients",
    "__version__",
]
