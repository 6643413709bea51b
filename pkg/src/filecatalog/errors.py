"""Exception taxonomy shared by every backend, the wire protocol and the CLI."""

from __future__ import annotations


class CatalogError(Exception):
    """Base class for all catalog failures.

    ``kind`` is the stable, wire-visible name of the error class; the service
    and the remote client use it to map errors losslessly in both directions.
    """

    kind = "error"
    http_status = 500
    exit_code = 3


class NotFoundError(CatalogError):
    kind = "not-found"
    http_status = 404
    exit_code = 1


class DuplicateError(CatalogError):
    kind = "duplicate"
    http_status = 409
    exit_code = 4


class ConflictError(CatalogError):
    kind = "conflict"
    http_status = 409
    exit_code = 4


class InvalidArgumentError(CatalogError, ValueError):
    kind = "invalid"
    http_status = 400
    exit_code = 2


class QuerySyntaxError(InvalidArgumentError):
    """Predicate text could not be parsed; ``column`` is 1-based."""

    kind = "query-syntax"

    def __init__(self, message: str, column: int) -> None:
        super().__init__(f"{message} at column {column}")
        self.column = column


class QueryTypeError(InvalidArgumentError):
    kind = "query-type"


class InvalidStateError(CatalogError):
    kind = "invalid-state"
    http_status = 400
    exit_code = 2


class CatalogPermissionError(CatalogError):
    kind = "forbidden"
    http_status = 403
    exit_code = 2


class CatalogIOError(CatalogError, OSError):
    kind = "io"
    http_status = 500
    exit_code = 3


class CorruptCatalogError(CatalogIOError):
    kind = "corrupt"


class TransportError(CatalogIOError):
    """The remote service could not be reached or the connection broke."""

    kind = "transport"
    http_status = 503


class ServerError(CatalogIOError):
    kind = "server-error"


ERROR_KINDS: dict[str, type[CatalogError]] = {
    cls.kind: cls
    for cls in (
        NotFoundError,
        DuplicateError,
        ConflictError,
        InvalidArgumentError,
        QueryTypeError,
        InvalidStateError,
        CatalogPermissionError,
        CatalogIOError,
        CorruptCatalogError,
        TransportError,
        ServerError,
    )
}


def error_from_kind(kind: str, message: str, column: int | None = None) -> CatalogError:
    """Rebuild an exception from its wire representation."""
    if kind == QuerySyntaxError.kind:
        err = QuerySyntaxError.__new__(QuerySyntaxError)
        CatalogError.__init__(err, message)
        err.column = column if column is not None else 0
        return err
    return ERROR_KINDS.get(kind, ServerError)(message)
