"""Exception hierarchy. The CLI maps each class onto an exit code."""


class GibbsError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class SpecError(GibbsError, ValueError):
    """Malformed species/class/series specification."""

    exit_code = 2


class PreconditionError(GibbsError, ValueError):
    """An operation was called outside of its domain."""

    exit_code = 3


class ResourceCapError(GibbsError, RuntimeError):
    """A hard resource cap (node count, attempts) was hit."""

    exit_code = 4


class SamplingExhausted(ResourceCapError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message, attempts=0, accepted=0):
        super().__init__(message)
        self.attempts = attempts
        self.accepted = accepted

    @property
    def acceptance_rate(self):
        return self.accepted / self.attempts if self.attempts else 0.0
