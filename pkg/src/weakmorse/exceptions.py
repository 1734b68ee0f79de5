"""Exception hierarchy for weakmorse."""


class WeakMorseError(Exception):
    """Base class for all package errors."""


class CollisionConfiguration(WeakMorseError, ValueError):
    """A pair distance fell below the hard floor, so the potential is undefined."""

    def __init__(self, pair, distance, floor):
        self.pair = pair
        self.distance = distance
        self.floor = floor
        super().__init__(
            f"bodies {pair[0]} and {pair[1]} at distance {distance:.3e} "
            f"(floor {floor:.1e})"
        )


class EndpointNotCentered(WeakMorseError, ValueError):
    pass


class OutOfDomain(WeakMorseError, ValueError):
    pass


class GridMismatch(WeakMorseError, ValueError):
    pass


class DomainError(WeakMorseError, ValueError):
    pass


class MaxIterations(WeakMorseError, RuntimeError):
    pass


class CollisionEncountered(WeakMorseError, RuntimeError):
    pass


class StringCollapse(WeakMorseError, RuntimeError):
    pass


class SingularHessian(WeakMorseError, RuntimeError):
    pass


class Diverged(WeakMorseError, RuntimeError):
    pass


class ContinuationBroke(WeakMorseError, RuntimeError):
    """A continuation solve failed; ``partial`` holds the sequence built so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BoundViolated(WeakMorseError, RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EigenSolveFailure(WeakMorseError, RuntimeError):
    pass


class InsufficientData(WeakMorseError, ValueError):
    pass


class WindowOutOfDomain(WeakMorseError, ValueError):
    pass


class CaseMismatch(WeakMorseError, ValueError):
    pass


class WindowEmpty(WeakMorseError, ValueError):
    pass


class SupportTooWide(WeakMorseError, ValueError):
    pass


class IntegrationFailure(WeakMorseError, RuntimeError):
    pass


class RadiusNotReached(WeakMorseError, ValueError):
    pass


class TruncationTooSmall(WeakMorseError, RuntimeError):
    pass


class WindowNotCovered(WeakMorseError, ValueError):
    pass


class ConfigError(WeakMorseError, ValueError):
    pass
