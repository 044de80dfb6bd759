"""Exception hierarchy shared across the package."""


class OrchestraError(Exception):
    """Base class for all errors raised by this package."""


class InputDomainError(OrchestraError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ContractError(OrchestraError):
    """A caller broke an operation's precondition."""


class ConfigError(OrchestraError):
    """Invalid or incomplete configuration."""


class ParseError(OrchestraError):
    """No answer payload could be extracted from model output."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ClassificationError(OrchestraError):
    """Head classifier produced a label outside the taxonomy."""

    def __init__(self, message: str, label: str = ""):
        super().__init__(message)
        self.label = label


class TransportError(OrchestraError):
    """Base class for remote backend failures."""


class TransientError(TransportError):
    """Retryable failure: network, timeout, 5xx, 429."""


class PermanentError(TransportError):
    """Non-retryable failure such as an HTTP 4xx response."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class SnapshotFormatError(OrchestraError):
    """Malformed snapshot file."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        loc = f" (line {line}, offset {offset})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class IncompatibleVersionError(SnapshotFormatError):
    """Snapshot written with an unsupported format major version."""


class StreamValidationError(OrchestraError):
    """A query stream record violates the QueryItem invariants."""

    def __init__(self, message: str, line: int | None = None, query_id: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if query_id is not None:
            where.append(f"id {query_id!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.query_id = query_id
