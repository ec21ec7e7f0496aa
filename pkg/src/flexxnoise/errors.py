"""Exception types raised by flexxnoise."""


class FlexxNoiseError(Exception):
    """Base class for all data/validation errors raised by this package."""


class DomainError(FlexxNoiseError, ValueError):
    """An input lies outside the domain of the noise model."""


class FormatError(FlexxNoiseError, ValueError):
    """A DPF1 file or its metadata sidecar is malformed or inconsistent."""


class ValidationError(FlexxNoiseError, ValueError):
    """A value object violates one of its invariants."""


class InsufficientDataError(FlexxNoiseError, ValueError):
    """Not enough valid frames, pixels or samples for a statistic."""


class DegenerateFitError(FlexxNoiseError, ValueError):
    """Point set cannot define a plane (empty, collinear, too few points)."""


class RankDeficientError(FlexxNoiseError, ValueError):
    """Design matrix of the axial model fit is rank deficient."""


class EdgeNotFoundError(FlexxNoiseError, ValueError):
    """No depth discontinuity was found in the search band."""


class AmbiguousEdgeError(FlexxNoiseError, ValueError):
    """More than one dominant depth discontinuity in the search band."""
