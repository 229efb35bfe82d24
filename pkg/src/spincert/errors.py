"""Exception types shared across the toolkit."""


class SpincertError(Exception):
    """Base class for all toolkit errors."""


class DivergentSum(SpincertError):
    """A defining series has no finite value for the given parameters."""


class NotConverged(SpincertError):
    """An iterative or truncated computation failed its stabilization test."""


class NonSmooth(SpincertError):
    """Finite-difference derivative estimates disagree beyond tolerance."""


class SupportOutsideVolume(SpincertError):
    """An operator's support is not contained in the working volume."""


class VolumeTooLarge(SpincertError):
    """The requested volume exceeds the dense-matrix dimension ceiling."""


class DegenerateSplit(SpincertError):
    """No spectral-cluster separation of the requested size exists."""


class BadOrder(SpincertError):
    """Annulus parameters are not strictly ordered."""


class BadGeometry(SpincertError):
    """Annulus buffer parameters violate c < m < n."""


class DimensionMismatch(SpincertError):
    """Matrix operands have incompatible shapes."""


class BetaTooSmall(SpincertError):
    """The power-law exponent is too small for the requested constant."""


class BoundViolation(SpincertError):
    """A measured quantity exceeded its certified envelope."""


class QuadratureFailure(SpincertError):
    """Adaptive quadrature could not reach the requested accuracy."""


class DivergentEnvelope(SpincertError):
    """An envelope's series truncation test failed within the term budget."""


class NotInvariant(SpincertError):
    """A state or interaction is not fixed by the symmetry action."""


class NotInjective(SpincertError):
    """The transfer map's top eigenvalue is not simple."""


class AmbiguousWitness(SpincertError):
    """The bond-space witness does not square to a clean sign."""


class EmptyInteraction(SpincertError):
    """An interaction with no terms was supplied where one is required."""


class ConfigError(SpincertError):
    """A configuration file or override could not be interpreted."""
