"""Exception hierarchy shared by all modules."""


class DSAError(Exception):
    """Base class for every error raised by the package."""


class InvalidParam(DSAError, ValueError):
    pass


class ConnectivityFailure(DSAError):
    pass


class AssumptionViolation(DSAError):
    pass


class DimensionMismatch(DSAError, ValueError):
    pass


class ZeroStrongConvexity(DSAError):
    pass


class TableUninitialized(DSAError):
    pass


class MissingHistory(DSAError):
    pass


class NonFinite(DSAError, FloatingPointError):
    """An iterate became NaN or infinite; usually the stepsize is too large."""


class MissingDual(DSAError):
    pass


class ParamOutOfRange(DSAError, ValueError):
    def __init__(self, name, value, interval):
        self.name = name
        self.value = value
        self.interval = interval
        lo, hi = interval
        super().__init__(f"{name}={value!r} outside admissible interval ({lo!r}, {hi!r})")


class TooLarge(DSAError):
    pass


class NoConvergence(DSAError):
    pass


class EmptyWindow(DSAError, ValueError):
    pass


class NonPositiveError(DSAError, ValueError):
    pass


class ConfigError(DSAError):
    pass
