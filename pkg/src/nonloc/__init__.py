"""Grid-based wavefunction evolution under local and non-local potentials,
with first-order phase-space non-commutativity and continuity diagnostics."""

from ._kernels import backend_name
from .errors import BoundaryError, ConfigError, NonlocError, ResolutionError, SolverError
from .fieldlab import ComplexField, Grid, RealField, VectorField

__version__ = "0.1.0"

__all__ = [
    "BoundaryError",
    "ComplexField",
    "ConfigError",
    "Grid",
    "NonlocError",
    "RealField",
    "ResolutionError",
    "SolverError",
    "VectorField",
    "backend_name",
    "__version__",
]
