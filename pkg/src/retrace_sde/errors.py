"""Exception hierarchy shared by every module."""


class RetraceError(Exception):
    """Base class for all package errors."""


class NonHurwitz(RetraceError):
    """Drift matrix has an eigenvalue with non-negative real part."""


class SolveFailure(RetraceError):
    """A linear system was numerically singular."""


class FactorizationFailure(RetraceError):
    """A covariance matrix could not be factorized."""


class GenerationFailure(RetraceError):
    """Rejection sampling of random parameters ran out of attempts."""


class InsufficientSamples(RetraceError):
    pass


class SingularCovariance(RetraceError):
    pass


class SingularGram(RetraceError):
    """Pooled Gram matrix of the states is not invertible."""


class NonMonotoneLikelihood(RetraceError):
    """EM log-likelihood decreased between iterations."""


class ShapeMismatch(RetraceError, ValueError):
    pass


class EigDecompositionFailure(RetraceError):
    pass


class NonPositiveVolume(RetraceError, ValueError):
    pass


class ParseError(RetraceError):
    pass


class ValidationError(RetraceError, ValueError):
    pass


class VersionMismatch(RetraceError):
    pass


class ChecksumMismatch(RetraceError):
    pass
