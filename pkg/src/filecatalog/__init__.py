"""Replica and metadata catalog with XML, embedded and remote backends."""

from __future__ import annotations

from .catalog import CollectionDescription, CollectionRow, FileCatalog
from .collection import (
    Collection,
    create_collection,
    open_collection,
    open_implicit,
    select,
    select_hierarchical,
)
from .connect import ConnectionString, open_catalog
from .crosscat import CatalogFragment, PublishReport, extract, migrate, publish
from .embedded import EmbeddedCatalog
from .errors import (
    CatalogError,
    CatalogIOError,
    CatalogPermissionError,
    ConflictError,
    CorruptCatalogError,
    DuplicateError,
    InvalidArgumentError,
    InvalidStateError,
    NotFoundError,
    QuerySyntaxError,
    QueryTypeError,
    ServerError,
    TransportError,
)
from .model import PFN, Attribute, AttributeSchema, CatalogEntry, Token, generate_file_id
from .remote import RemoteCatalog
from .service import ServiceConfig, serve
from .xmlcatalog import XmlCatalog

__version__ = "0.1.0"

__all__ = [
    "PFN",
    "Attribute",
    "AttributeSchema",
    "CatalogEntry",
    "CatalogError",
    "CatalogFragment",
    "CatalogIOError",
    "CatalogPermissionError",
    "Collection",
    "CollectionDescription",
    "CollectionRow",
    "ConflictError",
    "ConnectionString",
    "CorruptCatalogError",
    "DuplicateError",
    "EmbeddedCatalog",
    "FileCatalog",
    "InvalidArgumentError",
    "InvalidStateError",
    "NotFoundError",
    "PublishReport",
    "QuerySyntaxError",
    "QueryTypeError",
    "RemoteCatalog",
    "ServerError",
    "ServiceConfig",
    "Token",
    "TransportError",
    "XmlCatalog",
    "create_collection",
    "extract",
    "generate_file_id",
    "migrate",
    "open_catalog",
    "open_collection",
    "open_implicit",
    "publish",
    "select",
    "select_hierarchical",
    "serve",
]
