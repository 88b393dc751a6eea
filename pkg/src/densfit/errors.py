"""Exception hierarchy shared across the package."""


class DensfitError(Exception):
    """Base class for all library errors."""


class DomainMismatch(DensfitError):
    """Two objects live on different mixed domains."""


class NonPositiveDensity(DensfitError):
    """Density values must be strictly positive."""


class OutOfSpan(DensfitError):
    """Evaluation point outside the knot span of a spline basis."""


class OutOfDomain(DensfitError):
    """Point is neither inside the interval nor equal to an atom."""


class DegenerateBasis(DensfitError):
    """Basis construction failed a rank or integral condition."""


class WeightMismatch(DensfitError):
    """Auxiliary atom weight does not match the interval length."""


class UnknownLevel(DensfitError):
    """Categorical value not among the declared levels."""


class NegativeSmoothing(DensfitError):
    """Smoothing parameters must be nonnegative."""


class ObservationOutsideDomain(DensfitError):
    """Response value outside the interval and not an atom."""


class NonPositiveWeight(DensfitError):
    """Sample weights must be strictly positive."""


class NotAPartition(DensfitError):
    """Index subsets do not partition the combo's index set."""


class EmptyCombo(DensfitError):
    """A covariate combination carries no observations."""


class MaxIterationsExceeded(DensfitError):
    """Newton iteration or step-halving budget exhausted."""


class SingularHessian(DensfitError):
    """Hessian not invertible; usually a rank-condition violation."""


class SingularCovariance(DensfitError):
    """Region covariance is not usable even after the eigenvalue floor."""


class MissingTerm(DensfitError):
    """Model lacks a term required by the requested transform."""


class ZeroTruthNorm(DensfitError):
    """relMSE denominator vanishes."""


class ConfigError(DensfitError):
    """Malformed model or scenario configuration."""
