"""Exception types shared across the package."""


class EchokitError(Exception):
    """Base class for package-specific failures."""


class ConfigError(EchokitError):
    """A scenario configuration is malformed or inconsistent (CLI exit 2)."""


class NumericsError(EchokitError):
    """A numerical operation failed, e.g. a singular covariance (CLI exit 3)."""
