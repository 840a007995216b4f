"""Exception types shared across the toolkit."""


class AttnGuardError(Exception):
    """Base class for all toolkit errors."""


class MalformedTraceError(AttnGuardError):
    """Trace data violates an invariant (non-finite or negative entries, shape mismatch)."""


class TraceFormatError(AttnGuardError):
    """Base class for container decode errors; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(TraceFormatError):
    pass


class VersionMismatchError(TraceFormatError):
    pass


class TruncatedPayloadError(TraceFormatError):
    pass


class ShapeMismatchError(TraceFormatError):
    """Metadata shape and payload size disagree."""


class DegenerateDatasetError(AttnGuardError):
    """A labeled dataset is missing one of the two classes."""


class RankDeficiencyError(AttnGuardError):
    """Requested more principal components than the data rank supports."""


class DimensionMismatchError(AttnGuardError):
    pass


class InsufficientTokensError(AttnGuardError):
    """Covariance needs at least two token maps."""


class NotSpdError(AttnGuardError):
    """Matrix has a non-positive eigenvalue; regularization is missing."""


class AsymmetricMatrixError(AttnGuardError):
    pass


class SingularScatterError(AttnGuardError):
    """Within-class scatter is singular and no shrinkage was requested."""


class OracleError(AttnGuardError):
    """A similarity-oracle call failed. May carry a partial audit trail."""

    def __init__(self, message: str, audit=None):
        super().__init__(message)
        self.audit = audit if audit is not None else []
