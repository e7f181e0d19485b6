"""Exception types shared across the package."""


class RagloopError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDocument(RagloopError):
    pass


class IngestError(RagloopError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateDocument(RagloopError):
    pass


class NotFound(RagloopError):
    pass


class IndexBuildError(RagloopError):
    pass


class EmptyQuery(RagloopError):
    pass


class EmbeddingError(RagloopError):
    def __init__(self, reason: str, retryable: bool = False):
        super().__init__(reason)
        self.retryable = retryable


class InvalidParameter(RagloopError):
    pass


class ProtocolError(RagloopError):
    pass


class ClientError(RagloopError):
    """Chat-model client failed (transport, auth, or malformed reply)."""


class TrajectoryAborted(RagloopError):
    """Agent episode died before producing an answer. Carries the partial trajectory."""

    def __init__(self, reason: str, trajectory=None):
        super().__init__(reason)
        self.trajectory = trajectory


class PlanningError(RagloopError):
    pass


class GroupTooSmall(RagloopError):
    pass


class ExportError(RagloopError):
    pass
