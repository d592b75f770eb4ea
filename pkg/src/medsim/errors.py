"""Exception hierarchy. Everything subclasses ValueError so callers that only
care about bad input can catch one thing."""


class MedsimError(ValueError):
    pass


class DomainError(MedsimError):
    """An argument lies outside the domain of the operation."""


class DegenerateSpreadError(DomainError):
    """Quartiles coincide (q1 >= q3), so no spread parameter can be fitted."""


class EmptySampleError(MedsimError):
    pass


class InsufficientDataError(MedsimError):
    pass


class UnknownEstimatorError(MedsimError, LookupError):
    pass


class ConfigError(MedsimError):
    """Invalid simulation or CLI configuration.

    ``key`` names the offending field when one can be identified.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DegenerateResultError(MedsimError):
    """Every trial of a cell errored, so no coverage can be reported."""
