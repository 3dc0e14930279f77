"""
Exception Hierarchy
===================

Every error raised on purpose by the engine derives from LayeredMotionError.
Errors describing bad input also derive from ValueError so callers that only
know about ValueError keep working.
"""


class LayeredMotionError(Exception):
    """Base class for all engine errors."""


class DimensionError(LayeredMotionError, ValueError):
    """Array shapes do not agree (planes, plane tables, kernels, flows)."""


class DomainError(LayeredMotionError, ValueError):
    """A value lies outside the domain an operation is defined on."""


class DegenerateProjectionError(DomainError):
    """Effective depth d + u_z is not positive, so the point cannot be unprojected."""


class ConfigurationError(LayeredMotionError, ValueError):
    """Network weights, config files or options are inconsistent."""


class InputError(LayeredMotionError, ValueError):
    """Sequence data on disk or in memory is missing or malformed."""


class PipelineError(LayeredMotionError):
    """
    Failure inside predict_frames, tagged with the stage that raised it.

    Attributes:
        stage: pipeline stage name (build, camera-compensate, estimate-flow, ...)
        cause: the original exception
    """

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
