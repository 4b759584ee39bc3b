"""Exception types shared across the package."""


class NonlocError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NonlocError, ValueError):
    """Invalid parameters, specs, or scenario configuration."""


class ResolutionError(ConfigError):
    """A length scale is not resolvable on the requested grid."""


class BoundaryError(NonlocError, ValueError):
    """Operation is not defined for the grid's boundary type."""


class SolverError(NonlocError, RuntimeError):
    """An iterative solve failed to converge or a compatibility condition broke."""
