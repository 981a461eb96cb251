"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid configuration. Carries a JSON-pointer style path when known."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message} (at {path})" if path else message)


class IoFailure(PipelineError):
    """Filesystem read/write failed."""


class InvariantViolation(PipelineError):
    """A data structure violates one of its documented invariants."""


class MalformedFile(PipelineError):
    """On-disk data could not be parsed or fails format invariants."""


class MissingFrame(PipelineError):
    """A required frame (file or cache entry) is absent."""


class EmptyClass(PipelineError):
    """No ground-truth boxes available for a requested class."""


class UnknownScenario(PipelineError):
    """Scenario name is not in the library."""


class NonPlanarRotation(PipelineError):
    """Pose pair differs by a rotation that tilts the z axis."""


class ClassMismatch(PipelineError):
    """Detection class does not match track class."""


class NoHistory(PipelineError):
    """Track has no history at or before the requested frame."""


class MissingWaypoint(PipelineError):
    """Requested trajectory waypoint offset does not exist."""


class EmptyGroundTruth(PipelineError):
    """No ground-truth future positions available for forecast metrics."""


class NoGroundTruth(PipelineError):
    """No ground-truth boxes in an evaluation bucket."""
