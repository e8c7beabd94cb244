"""Exception types raised across the package."""


class CorrselError(ValueError):
    """Base class for all domain errors."""


class InvalidGeometryError(CorrselError):
    pass


class NotPositiveDefiniteError(CorrselError):
    pass


class IllConditionedError(CorrselError):
    pass


class PreconditionError(CorrselError):
    pass


class BudgetError(CorrselError):
    pass


class TooLargeError(CorrselError):
    """Raised when an exhaustive enumeration exceeds its size guard."""


class ConfigError(CorrselError):
    pass
