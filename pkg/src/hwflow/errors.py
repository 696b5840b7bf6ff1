"""Exception types raised across the package."""


class HWFlowError(Exception):
    """Base class for all package errors."""


class OutOfWindow(HWFlowError, IndexError):
    """A light cone or site falls outside the simulated lattice window."""


class NotProbability(HWFlowError, ValueError):
    pass


class InfiniteB(HWFlowError, ValueError):
    """The integral of nu(dq) / (q(1-q)) diverges."""


class EpsTooLarge(HWFlowError, ValueError):
    pass


class DegenerateSplit(HWFlowError, ValueError):
    pass


class InvalidTheta(HWFlowError, ValueError):
    pass


class BadSpeeds(HWFlowError, ValueError):
    pass


class MissingMark(HWFlowError, KeyError):
    pass


class ThetaTooSmall(HWFlowError, ValueError):
    pass


class InfiniteSpeed(HWFlowError, ValueError):
    pass


class WindowTooSmall(HWFlowError, ValueError):
    pass


class ConfigError(HWFlowError, ValueError):
    """Malformed experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class GateFailure(HWFlowError):
    pass
