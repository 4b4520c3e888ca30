"""Exception hierarchy shared by all memfront modules."""


class MemfrontError(Exception):
    """Base class for every error raised by memfront."""


# kernels
class KernelError(MemfrontError):
    pass


class ZeroWeight(KernelError):
    """Total memory weight vanishes, so the kernel cannot be normalized."""


class NegativeKernel(KernelError):
    """Kernel takes negative values somewhere on its validation grid."""


class DivergentMoment(KernelError):
    """A tabulated kernel has no decaying tail, so its moments diverge."""


class InsufficientHistory(KernelError):
    """The supplied history does not reach back to the convolution depth."""


# nonlinearity
class NotBistable(MemfrontError):
    """The tilted nonlinearity does not have three simple zeros with signs (-, +, -)."""


class OutOfRegime(MemfrontError):
    """A parameter lies outside the range where a closed form is defined."""


# traveling-wave solver
class NoConvergence(MemfrontError):
    """Newton iteration stalled after exhausting damping."""


class DomainTooSmall(MemfrontError):
    """Front profile has not flattened out at the truncated boundaries."""


class MonotonicityViolation(MemfrontError):
    """A sampled speed curve is not monotone in the auxiliary speed."""


class BracketFailure(MemfrontError):
    """No sign change of C(v) - v found while expanding the bracket."""


# time stepping
class StabilityViolation(MemfrontError):
    """Time step exceeds the stability limit of the explicit terms."""


class NaNDetected(MemfrontError):
    """Non-finite values appeared in a field."""


class FrontExited(MemfrontError):
    """The tracked front came too close to the domain boundary."""


class NoCrossing(MemfrontError):
    """The field no longer crosses the tracking level."""


# two-scale
class NotPositive(MemfrontError):
    """Microscopic diffusion or damping coefficient is not strictly positive."""


class ResolutionError(MemfrontError):
    """The grid does not resolve the oscillation period epsilon."""


# experiments
class ConfigError(MemfrontError):
    """Experiment configuration is malformed."""
