"""Exception hierarchy shared by every module."""


class ReplicatorAtlasError(Exception):
    """Base class for all library errors."""


class ConstructionError(ReplicatorAtlasError, ValueError):
    """A game or profile could not be built from the given parameters."""


class DimensionError(ReplicatorAtlasError, ValueError):
    """A profile does not match the shape of the game it is paired with."""


class DomainError(ReplicatorAtlasError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(ReplicatorAtlasError, ValueError):
    """An operation was called on an input that violates its precondition."""


class AssumptionError(PreconditionError):
    """A game violates the distinct-entries genericity assumption."""


class CapacityError(ReplicatorAtlasError, ValueError):
    """The requested instance is too large for exhaustive treatment."""


class ConfigurationError(ReplicatorAtlasError, ValueError):
    """Required configuration (e.g. the optimum) is missing."""


class SpecParseError(ReplicatorAtlasError, ValueError):
    """A game document is malformed.

    ``path`` is a JSONPath-like pointer to the offending element.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class NumericalFailure(ReplicatorAtlasError, ArithmeticError):
    """The integrator produced a non-finite state.

    ``last_time`` and ``last_state`` hold the last accepted sample.
    """

    def __init__(self, message: str, last_time: float | None = None, last_state=None):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state
