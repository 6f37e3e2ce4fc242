"""Exception hierarchy.

Each top-level family maps to one CLI exit code (see ``exit_code``).
"""


class CrossPoseError(Exception):
    """Base class; anything else escaping the CLI is an internal error."""

    exit_code = 4


class ValidationError(CrossPoseError):
    """Bad configuration, bad arguments, bad spec files."""

    exit_code = 1


class ConfigError(ValidationError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where += f" [key: {key}"
            where += f", line {line}]" if line is not None else "]"
        super().__init__(message + where)


class RemapError(ValidationError):
    """A joint remap table references joints that do not exist."""


class SynthSpecError(ValidationError):
    """Synthetic generator spec is infeasible."""


class DataError(CrossPoseError):
    exit_code = 2


class InvalidSampleError(DataError):
    """Non-finite coordinates or otherwise unusable pose."""


class BehindCameraError(InvalidSampleError):
    """A point projected with z <= 0."""


class DegenerateFrameError(InvalidSampleError):
    """Subject frame cannot be built (collinear hips/neck); viewpoint undefined."""


class AlignmentDegenerateError(InvalidSampleError):
    """Procrustes cross-covariance is rank deficient."""


class ShapeError(DataError):
    pass


class NotCenteredError(DataError):
    """Root joint is not at the origin."""


class DataLoadError(DataError):
    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{message}: {path}" if path is not None else message)


class ArchiveError(DataError):
    """Corrupt, truncated or version-mismatched archive."""


class UndefinedCorrelationError(DataError):
    pass


class PredictionSourceError(CrossPoseError):
    exit_code = 3


class MissingIdsError(PredictionSourceError):
    def __init__(self, missing=(), extra=()):
        self.missing = list(missing)
        self.extra = list(extra)
        parts = []
        if self.missing:
            parts.append("missing ids: " + ", ".join(map(str, self.missing[:10])))
        if self.extra:
            parts.append("unknown ids: " + ", ".join(map(str, self.extra[:10])))
        super().__init__("; ".join(parts))


class SessionError(PredictionSourceError):
    """Base for external model session failures."""

    def __init__(self, message, request_id=None):
        self.request_id = request_id
        if request_id is not None:
            message = f"{message} (request id {request_id})"
        super().__init__(message)


class HandshakeError(SessionError):
    pass


class ProtocolFrameError(SessionError):
    pass


class SessionTimeoutError(SessionError):
    pass


class ChildExitError(SessionError):
    pass


class StageError(CrossPoseError):
    """Wraps an error with the evaluation stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)
        super().__init__(f"[{stage}] {cause}")
