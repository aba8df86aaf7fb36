"""Large-deviation rates for atypical induced random states, with Monte Carlo checks."""

from .qstate import (
    BlochVector,
    DensityMatrix,
    HermitianObservable,
    Spectrum,
    ValidationError,
    binary_rel_entropy,
    rel_entropy_vs_pi,
    trace_distance,
    von_neumann_entropy,
)
from .rates import RateResult, rate_max_eigenvalue
from .sampler import SeededStream
from .solver import (
    BlochRegion,
    ConstraintSet,
    InfeasibleError,
    LinearConstraint,
    SolverConfig,
    SpectralConstraint,
    min_rel_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "BlochRegion",
    "BlochVector",
    "ConstraintSet",
    "DensityMatrix",
    "HermitianObservable",
    "InfeasibleError",
    "LinearConstraint",
    "RateResult",
    "SeededStream",
    "SolverConfig",
    "SpectralConstraint",
    "Spectrum",
    "ValidationError",
    "binary_rel_entropy",
    "min_rel_entropy",
    "rate_max_eigenvalue",
    "rel_entropy_vs_pi",
    "trace_distance",
    "von_neumann_entropy",
]
