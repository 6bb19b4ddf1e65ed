"""Maximum-likelihood reconstruction of quantum measurements (POVMs)
from counts on known probe states."""
from . import estimators, matcore, simulator
from .core import (
    CountTable,
    DensityMatrix,
    FrequencyTable,
    PovmSet,
    ProbeEnsemble,
    ValidationReport,
    log_likelihood,
    outcome_probabilities,
    povm_to_real_vector,
    probability_table,
    real_vector_to_matrix,
    relative_frequencies,
    validate_povm,
)
from .estimators import (
    EstimateResult,
    EstimatorOptions,
    linear_inversion,
    ml_diagonal,
    ml_dform,
    ml_fixed_point,
    ml_simplex,
    support_projector,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CountTable",
    "DensityMatrix",
    "EstimateResult",
    "EstimatorOptions",
    "FrequencyTable",
    "PovmSet",
    "ProbeEnsemble",
    "ValidationReport",
    "estimators",
    "linear_inversion",
    "log_likelihood",
    "matcore",
    "ml_diagonal",
    "ml_dform",
    "ml_fixed_point",
    "ml_simplex",
    "outcome_probabilities",
    "povm_to_real_vector",
    "probability_table",
    "real_vector_to_matrix",
    "relative_frequencies",
    "simulator",
    "support_projector",
    "validate_povm",
]
