"""Exception hierarchy shared by all pipeline stages."""


class BistaticError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BistaticError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateSegmentError(ConfigError):
    """Two consecutive waypoints coincide."""


class SingularGeometryError(BistaticError, ValueError):
    """A target position coincides with a transmitter or receiver."""


class DegenerateGeometryError(BistaticError):
    """Doppler matrix too ill-conditioned to invert.

    ``partial`` holds the track estimate reconstructed up to the failing
    instance when raised from trajectory integration.
    """

    def __init__(self, message, cond, index=None, partial=None):
        super().__init__(message)
        self.cond = cond
        self.index = index
        self.partial = partial


class NoIntersectionError(BistaticError, ValueError):
    """Bearing lines are too close to parallel to intersect reliably."""


class CoverageError(BistaticError, ValueError):
    """Inputs do not span the time interval an operation requires."""


class AlignmentError(BistaticError, ValueError):
    """Captures differ in sample rate, length or start time."""


class WindowError(BistaticError, ValueError):
    """A CAF window has the wrong number of samples."""


class ContractError(BistaticError, ValueError):
    """An input violates a documented precondition."""


class NoSignalError(BistaticError, ValueError):
    """A CAF map carries no energy at all."""


class UnrecoverableTrackError(BistaticError, ValueError):
    """No detection instance with exactly one Doppler detection exists."""


class EmptyReportError(BistaticError, ValueError):
    """Percentiles requested from an empty error report."""


class IqFormatError(BistaticError, ValueError):
    """IQ file header and payload disagree, or the format is unknown."""


class StageError(BistaticError):
    """Wraps a failure inside one pipeline stage."""

    def __init__(self, stage, cause, index=None):
        where = f" at instance {index}" if index is not None else ""
        super().__init__(f"stage '{stage}' failed{where}: {cause}")
        self.stage = stage
        self.cause = cause
        self.index = index
