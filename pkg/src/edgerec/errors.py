"""Exception hierarchy shared by all edgerec modules."""


class EdgeRecError(Exception):
    """Base class for every error raised by this package."""


class InvalidPtm(EdgeRecError, ValueError):
    pass


class InvalidStrategy(EdgeRecError, ValueError):
    pass


class NoRecommendation(EdgeRecError):
    """Raised when a slot is served with an all-zero recommendation vector."""


class InvalidAlpha(EdgeRecError, ValueError):
    pass


class TooLarge(EdgeRecError):
    """Raised when exhaustive enumeration would exceed the size guard."""


class DimensionMismatch(EdgeRecError, ValueError):
    pass


class InvalidWeight(EdgeRecError, ValueError):
    pass


class ScenarioInfeasible(EdgeRecError):
    pass


class InvalidSinr(EdgeRecError, ValueError):
    pass


class ParseError(EdgeRecError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(EdgeRecError, ValueError):
    pass
