"""Exception and warning types shared across the package."""


class RgSpectraError(Exception):
    """Base class for package errors."""


class DuplicatePointError(RgSpectraError):
    pass


class CapExceededError(RgSpectraError):
    """A configured size cap was exceeded (eigensolve size, enumeration guard)."""


class PreconditionError(RgSpectraError, ValueError):
    pass


class SpectralRangeError(RgSpectraError):
    """exp(c * lambda) would overflow double precision."""


class DivergenceError(RgSpectraError):
    """A weighted or Sobolev norm integral failed to converge."""


class NotStabilizedError(RgSpectraError):
    """A sector scan ran out of window before the defining condition held."""


class CostGuardError(RgSpectraError):
    pass


class ConfigError(RgSpectraError):
    pass


class InexactWalkCountWarning(UserWarning):
    """Walk counts exceeded 2**53 and are no longer exact in double precision."""


class DegenerateVarianceWarning(UserWarning):
    pass
