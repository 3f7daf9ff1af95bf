"""Exception types shared across the package."""


class MhpError(Exception):
    """Base class for all domain errors raised by this package."""


class DuplicateLink(MhpError):
    pass


class DuplicateMovement(MhpError):
    pass


class DanglingMovement(MhpError):
    pass


class RatioSumViolation(MhpError):
    pass


class NoExitLink(MhpError):
    pass


class UnknownLink(MhpError):
    pass


class DimensionMismatch(MhpError):
    pass


class InvalidScenario(MhpError):
    pass


class UnknownScenario(MhpError):
    pass


class CapacityViolation(MhpError):
    """Internal consistency failure of the simulator; must be unreachable."""


class NonFiniteGradient(MhpError):
    pass


class DegenerateVariance(MhpError):
    pass


class EmptyWindow(MhpError):
    pass
