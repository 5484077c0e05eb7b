"""Exception types shared across the toolkit."""


class InvalidArgument(ValueError):
    pass


class DomainError(ValueError):
    """A query point lies outside the objective's declared domain."""


class ResourceLimitError(RuntimeError):
    """A net, batch or schedule value exceeds a configured hard cap."""


class BudgetExceeded(ResourceLimitError):
    """A batch would exceed a session's round or per-round query budget."""


class ContractViolation(RuntimeError):
    """The objective broke an assumption the algorithm relies on."""


class AlgorithmFailure(RuntimeError):
    """Raised when no candidate passes a final stationarity check.

    ``estimates`` holds whatever per-candidate data was computed, so the
    caller can see how far off each candidate was.
    """

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates


class UnsupportedOperation(NotImplementedError):
    pass


class DimensionTooSmall(InvalidArgument):
    def __init__(self, message, min_dimension):
        super().__init__(message)
        self.min_dimension = min_dimension
