"""Connection strings: ``<scheme>:<location>`` selects and opens a backend."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .catalog import FileCatalog
from .errors import InvalidArgumentError, NotFoundError

SCHEMES = ("xmlcatalog_file", "embedded", "remote")
CATALOG_ENV = "FILECATALOG_CATALOG"
SERVICE_URL_ENV = "FILECATALOG_SERVICE_URL"
TOKEN_ENV = "FILECATALOG_TOKEN"


@dataclass(frozen=True)
class ConnectionString:
    scheme: str
    location: str

    @classmethod
    def parse(cls, text: str) -> ConnectionString:
        scheme, sep, location = text.partition(":")
        if not sep or scheme not in SCHEMES:
            raise InvalidArgumentError(
                f"bad connection string {text!r}; expected one of "
                + ", ".join(f"{s}:<location>" for s in SCHEMES)
            )
        if not location:
            raise InvalidArgumentError(f"connection string {text!r} has an empty location")
        return cls(scheme, location)

    def __str__(self) -> str:
        return f"{self.scheme}:{self.location}"


def default_connection_string() -> str | None:
    """The catalog named by the environment, if any."""
    cs = os.environ.get(CATALOG_ENV)
    if cs:
        return cs
    url = os.environ.get(SERVICE_URL_ENV)
    return f"remote:{url}" if url else None


def open_catalog(
    cs: str | ConnectionString,
    mode: str | None = None,
    *,
    autocommit: bool = True,
    token: str | None = None,
) -> FileCatalog:
    """Open the catalog behind a connection string.

    ``mode=None`` opens for update, creating a local store that does not
    exist yet.
    """
    if not isinstance(cs, ConnectionString):
        cs = ConnectionString.parse(cs)
    if cs.scheme == "remote":
        from .remote import RemoteCatalog

        return RemoteCatalog(
            cs.location,
            "update" if mode is None else mode,
            autocommit=autocommit,
            token=token if token is not None else os.environ.get(TOKEN_ENV),
        )
    if cs.scheme == "embedded":
        from .embedded import EmbeddedCatalog as backend
    else:
        from .xmlcatalog import XmlCatalog as backend
    if mode is not None:
        return backend(cs.location, mode, autocommit=autocommit)
    try:
        return backend(cs.location, "update", autocommit=autocommit)
    except NotFoundError:
        return backend(cs.location, "create", autocommit=autocommit)
