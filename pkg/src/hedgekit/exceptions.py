"""Exception hierarchy shared across the toolkit."""


class HedgeKitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(HedgeKitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedKindError(HedgeKitError, ValueError):
    """The requested policy kind has no closed form for this operation."""


class ConfigurationError(HedgeKitError, ValueError):
    """Inconsistent or invalid configuration (grid, bracket, pool size, ...)."""


class DataError(HedgeKitError, ValueError):
    """Malformed or inconsistent input data."""
