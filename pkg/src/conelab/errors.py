"""Exception hierarchy shared across the package."""


class ConelabError(Exception):
    """Base class for numerical and geometric failures."""


class ConfigError(ConelabError):
    """Bad or inconsistent run configuration."""


class ResolutionError(ConelabError):
    """Requested computation is below the resolving power of the mesh."""


class ConvergenceError(ConelabError):
    """An iterative method failed to reach its tolerance."""
