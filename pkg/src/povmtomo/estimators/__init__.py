"""POVM reconstruction algorithms."""
from .common import EstimateResult, EstimatorOptions, support_basis, support_projector
from .iterative import ml_diagonal, ml_dform, ml_fixed_point
from .linear import LinearInversionResult, design_matrix, linear_inversion
from .simplex import ml_simplex

METHODS = {
    "ml-fixed": ml_fixed_point,
    "ml-dform": ml_dform,
    "ml-diag": ml_diagonal,
    "simplex": ml_simplex,
}

__all__ = [
    "EstimateResult",
    "EstimatorOptions",
    "LinearInversionResult",
    "METHODS",
    "design_matrix",
    "linear_inversion",
    "ml_diagonal",
    "ml_dform",
    "ml_fixed_point",
    "ml_simplex",
    "support_basis",
    "support_projector",
]
