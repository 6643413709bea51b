"""Abstract file catalog contract shared by the xml, embedded and remote backends.

Public methods validate their arguments, take the handle lock and run the
backend primitive inside a transaction. In autocommit mode (the default)
every mutation is its own transaction; in explicit mode a mutation without
an active transaction is an :class:`InvalidStateError`.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

from . import query
from .errors import (
    CatalogError,
    CatalogPermissionError,
    InvalidArgumentError,
    InvalidStateError,
    NotFoundError,
)
from .model import (
    PFN,
    AttributeSchema,
    CatalogEntry,
    Token,
    IDENT_RE,
    KEYWORDS,
    Value,
    as_pfn,
    canonical_file_id,
    check_name,
    check_row,
    check_value,
    full_row,
    generate_file_id,
    value_type,
)

COLLECTION_KINDS = ("explicit", "implicit", "hierarchical")
#: pseudo-attribute naming the collection a selected row came from
COLLECTION_NAME_ATTR = "collection_name"


@dataclass(frozen=True)
class CollectionDescription:
    name: str
    kind: str
    schema: AttributeSchema = AttributeSchema()
    metadata: Mapping[str, Value] = field(default_factory=dict)
    children: tuple[str, ...] = ()

    def metadata_types(self) -> dict[str, str]:
        return {k: value_type(v) for k, v in self.metadata.items() if v is not None}


@dataclass(frozen=True)
class CollectionRow:
    token: Token
    attributes: Mapping[str, Value]


def check_collection_metadata(metadata: Mapping[str, Any] | None) -> dict[str, Value]:
    out = {}
    for key, value in (metadata or {}).items():
        if not isinstance(key, str) or not IDENT_RE.match(key):
            raise InvalidArgumentError(f"invalid collection metadata name: {key!r}")
        if key == COLLECTION_NAME_ATTR:
            raise InvalidArgumentError(f"collection metadata name {key!r} is reserved")
        if key.lower() in KEYWORDS:
            raise InvalidArgumentError(f"collection metadata name {key!r} is reserved")
        if value is not None:
            out[key] = check_value(value_type(value), value, key)
    return out


class FileCatalog(ABC):
    """A catalog handle. Safe to share between threads; a transaction is not."""

    scheme: str = ""
    #: backends whose single mutations are atomic without an explicit begin/commit
    native_autocommit = False

    def __init__(self, *, writable: bool = True, autocommit: bool = True) -> None:
        self._lock = threading.RLock()
        self.writable = writable
        self.autocommit = autocommit
        self._in_tx = False
        self._closed = False

    # ------------------------------------------------------------------
    # backend primitives
    # ------------------------------------------------------------------

    @abstractmethod
    def _begin(self) -> None: ...

    @abstractmethod
    def _commit(self) -> None: ...

    @abstractmethod
    def _rollback(self) -> None: ...

    def _close(self) -> None:
        pass

    @abstractmethod
    def _create_entry(self, guid: str, pfn: PFN) -> None:
        """Insert a new entry; duplicate if the guid or the PFN exists."""

    def _register_file(self, pfn: PFN, proposal: str | None) -> tuple[str, bool]:
        try:
            return self._pfn_owner(pfn.name), False
        except NotFoundError:
            pass
        guid = proposal or generate_file_id()
        self._create_entry(guid, pfn)
        return guid, True

    @abstractmethod
    def _add_replica(self, guid: str, pfn: PFN) -> None: ...

    @abstractmethod
    def _pfns(self, guid: str) -> list[PFN]: ...

    @abstractmethod
    def _pfn_owner(self, name: str) -> str: ...

    @abstractmethod
    def _add_lfn(self, guid: str, lfn: str) -> None: ...

    @abstractmethod
    def _lfn_owner(self, lfn: str) -> str: ...

    @abstractmethod
    def _lfns(self, guid: str) -> list[str]: ...

    @abstractmethod
    def _schema(self) -> AttributeSchema: ...

    @abstractmethod
    def _define_schema(self, schema: AttributeSchema) -> None: ...

    @abstractmethod
    def _set_metadata(self, guid: str, attr: str, value: Value) -> None: ...

    @abstractmethod
    def _metadata(self, guid: str) -> dict[str, Value]:
        """Sparse row of set values; not-found for an unknown guid."""

    def _entry(self, guid: str) -> CatalogEntry:
        return CatalogEntry(guid, tuple(self._pfns(guid)), tuple(self._lfns(guid)), self._metadata(guid))

    @abstractmethod
    def _delete_entry(self, guid: str) -> None: ...

    @abstractmethod
    def _delete_pfn(self, name: str) -> None: ...

    @abstractmethod
    def _entries(self, predicate: query.Predicate | None) -> Iterator[CatalogEntry]:
        """Yield entries; the predicate is already typechecked."""

    @abstractmethod
    def _create_collection(self, desc: CollectionDescription) -> None: ...

    @abstractmethod
    def _collection(self, name: str) -> CollectionDescription: ...

    @abstractmethod
    def _collection_names(self) -> list[str]: ...

    @abstractmethod
    def _insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None: ...

    @abstractmethod
    def _rows(self, name: str) -> Iterator[CollectionRow]: ...

    @abstractmethod
    def _add_child(self, parent: str, child: str) -> None: ...

    @abstractmethod
    def _register_container(self, guid: str, container: str, count: int) -> None: ...

    @abstractmethod
    def _containers(self, guid: str) -> dict[str, int]: ...

    # ------------------------------------------------------------------
    # plumbing
    # ------------------------------------------------------------------

    def _check_open(self) -> None:
        if self._closed:
            raise InvalidStateError("catalog handle is closed")

    @contextmanager
    def _reading(self) -> Iterator[None]:
        with self._lock:
            self._check_open()
            yield

    @contextmanager
    def _mutating(self) -> Iterator[None]:
        with self._lock:
            self._check_open()
            if not self.writable:
                raise CatalogPermissionError("catalog is opened read-only")
            if self._in_tx:
                yield
                return
            if not self.autocommit:
                raise InvalidStateError("no active transaction (catalog opened in explicit mode)")
            if self.native_autocommit:
                yield
                return
            self._begin()
            try:
                yield
                self._commit()
            except BaseException:
                self._rollback()
                raise

    @contextmanager
    def _atomic(self) -> Iterator[None]:
        """Group several mutations; uses a transaction even for native autocommit."""
        with self._lock:
            self._check_open()
            if not self.writable:
                raise CatalogPermissionError("catalog is opened read-only")
            if self._in_tx:
                yield
                return
            if not self.autocommit:
                raise InvalidStateError("no active transaction (catalog opened in explicit mode)")
            self.start_transaction()
            try:
                yield
            except BaseException:
                self.rollback()
                raise
            self.commit()

    # ------------------------------------------------------------------
    # transactions
    # ------------------------------------------------------------------

    @property
    def in_transaction(self) -> bool:
        return self._in_tx

    def start_transaction(self) -> None:
        with self._lock:
            self._check_open()
            if self._in_tx:
                raise InvalidStateError("a transaction is already active")
            self._begin()
            self._in_tx = True

    def commit(self) -> None:
        with self._lock:
            self._check_open()
            if not self._in_tx:
                raise InvalidStateError("no active transaction")
            try:
                self._commit()
            except BaseException:
                # a failed commit leaves the catalog as it was at start
                try:
                    self._rollback()
                finally:
                    self._in_tx = False
                raise
            self._in_tx = False

    def rollback(self) -> None:
        with self._lock:
            self._check_open()
            if not self._in_tx:
                raise InvalidStateError("no active transaction")
            try:
                self._rollback()
            finally:
                self._in_tx = False

    @contextmanager
    def transaction(self) -> Iterator[FileCatalog]:
        self.start_transaction()
        try:
            yield self
        except BaseException:
            if self._in_tx:
                self.rollback()
            raise
        self.commit()

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            if self._in_tx:
                self.rollback()
            self._close()
            self._closed = True

    def __enter__(self) -> FileCatalog:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # ------------------------------------------------------------------
    # replicas and identity
    # ------------------------------------------------------------------

    def register_file(
        self, pfn: PFN | str, filetype: str | None = None, *, file_id: str | None = None
    ) -> tuple[str, bool]:
        """Return ``(FileID, created)`` for ``pfn``, creating a new entry if it is unknown.

        ``file_id`` is the identifier to use when an entry has to be created;
        by default a fresh GUID is generated.
        """
        p = as_pfn(pfn, filetype)
        proposal = None if file_id is None else canonical_file_id(file_id)
        with self._mutating():
            return self._register_file(p, proposal)

    def create_entry(self, file_id: str, pfn: PFN | str, filetype: str | None = None) -> None:
        """Create an entry under a caller-chosen FileID (used when publishing)."""
        guid = canonical_file_id(file_id)
        p = as_pfn(pfn, filetype)
        with self._mutating():
            self._create_entry(guid, p)

    def add_replica(self, file_id: str, pfn: PFN | str, filetype: str | None = None) -> None:
        guid = canonical_file_id(file_id)
        p = as_pfn(pfn, filetype)
        with self._mutating():
            self._add_replica(guid, p)

    def lookup_best_pfn(self, file_id: str) -> PFN:
        """The master replica: the earliest-registered PFN still present."""
        return self.lookup_all_pfns(file_id)[0]

    def lookup_all_pfns(self, file_id: str) -> list[PFN]:
        guid = canonical_file_id(file_id)
        with self._reading():
            return self._pfns(guid)

    def lookup_file_id(self, pfn_name: str) -> str:
        check_name(pfn_name, "PFN name")
        with self._reading():
            return self._pfn_owner(pfn_name)

    def add_lfn(self, file_id: str, lfn: str) -> None:
        guid = canonical_file_id(file_id)
        check_name(lfn, "LFN")
        with self._mutating():
            self._add_lfn(guid, lfn)

    def lookup_by_lfn(self, lfn: str) -> str:
        check_name(lfn, "LFN")
        with self._reading():
            return self._lfn_owner(lfn)

    def lookup_lfns(self, file_id: str) -> list[str]:
        guid = canonical_file_id(file_id)
        with self._reading():
            return self._lfns(guid)

    def get_entry(self, file_id: str) -> CatalogEntry:
        guid = canonical_file_id(file_id)
        with self._reading():
            return self._entry(guid)

    def delete_entry(self, file_id: str) -> None:
        guid = canonical_file_id(file_id)
        with self._mutating():
            self._delete_entry(guid)

    def delete_pfn(self, pfn_name: str) -> None:
        """Remove one replica; removing the last replica removes the entry."""
        check_name(pfn_name, "PFN name")
        with self._mutating():
            self._delete_pfn(pfn_name)

    def rename_pfn(self, old_name: str, new_name: str, filetype: str | None = None) -> str:
        """Replace a replica name under the same FileID, atomically."""
        check_name(old_name, "PFN name")
        new = as_pfn(new_name, filetype)
        with self._atomic():
            guid = self.lookup_file_id(old_name)
            if filetype is None:
                old = next(p for p in self.lookup_all_pfns(guid) if p.name == old_name)
                new = PFN(new.name, old.filetype)
            self.add_replica(guid, new)
            self.delete_pfn(old_name)
            return guid

    # ------------------------------------------------------------------
    # metadata
    # ------------------------------------------------------------------

    def define_metadata_schema(self, schema: AttributeSchema | Iterable[tuple[str, str]]) -> None:
        schema = AttributeSchema.of(schema)
        with self._mutating():
            self._define_schema(schema)

    def get_schema(self) -> AttributeSchema:
        with self._reading():
            return self._schema()

    def set_metadata(self, file_id: str, attr: str, value: Value) -> None:
        guid = canonical_file_id(file_id)
        if not isinstance(attr, str):
            raise InvalidArgumentError("attribute name must be a string")
        with self._mutating():
            self._set_metadata(guid, attr, value)

    def get_metadata(self, file_id: str) -> dict[str, Value]:
        """Full metadata row; unset attributes are None."""
        guid = canonical_file_id(file_id)
        with self._reading():
            return full_row(self._schema(), self._metadata(guid))

    # ------------------------------------------------------------------
    # enumeration
    # ------------------------------------------------------------------

    def query_view(self) -> dict[str, str]:
        return query.catalog_view(self.get_schema().types())

    def enumerate(self, predicate: query.Predicate | str | None = None) -> Iterator[CatalogEntry]:
        """Yield the entries whose metadata and pseudo-attributes satisfy ``predicate``."""
        self._check_open()
        pred = query.prepare(predicate, self.query_view()) if predicate is not None else None
        return self._entries(pred)

    def count(self, predicate: query.Predicate | str | None = None) -> int:
        return sum(1 for _ in self.enumerate(predicate))

    # ------------------------------------------------------------------
    # batches
    # ------------------------------------------------------------------

    def apply_batch(self, ops: Sequence[Mapping[str, Any]]) -> list[Any]:
        """Apply wire-format operations atomically; returns per-op results."""
        from .wire import execute

        with self._atomic():
            return [execute(self, op) for op in ops]

    def read_batch(self, ops: Sequence[Mapping[str, Any]]) -> list[Any]:
        """Run read operations, capturing per-op errors instead of raising."""
        from .wire import execute

        out: list[Any] = []
        for op in ops:
            try:
                out.append(execute(self, op))
            except CatalogError as exc:
                out.append(exc)
        return out

    # ------------------------------------------------------------------
    # collections storage
    # ------------------------------------------------------------------

    def create_collection(
        self,
        name: str,
        schema: AttributeSchema | Iterable[tuple[str, str]] | None = None,
        *,
        kind: str = "explicit",
        metadata: Mapping[str, Value] | None = None,
    ) -> CollectionDescription:
        check_name(name, "collection name")
        if "/" in name:
            raise InvalidArgumentError("collection names may not contain '/' (reserved for implicit collections)")
        if kind not in ("explicit", "hierarchical"):
            raise InvalidArgumentError(f"cannot create a collection of kind {kind!r}")
        schema = AttributeSchema.of(schema)
        if COLLECTION_NAME_ATTR in schema:
            raise InvalidArgumentError(f"attribute name {COLLECTION_NAME_ATTR!r} is reserved in collections")
        if kind == "hierarchical" and len(schema):
            raise InvalidArgumentError("hierarchical collections carry no object schema")
        desc = CollectionDescription(name, kind, schema, check_collection_metadata(metadata))
        with self._mutating():
            self._create_collection(desc)
        return desc

    def describe_collection(self, name: str) -> CollectionDescription:
        """Describe a stored collection, or an implicit one named ``<guid>/<container>``."""
        check_name(name, "collection name")
        with self._reading():
            implicit = parse_implicit_name(name)
            if implicit is None:
                return self._collection(name)
            guid, container = implicit
            if container not in self._containers(guid):
                raise NotFoundError(f"no container {container!r} registered for {guid}")
            return CollectionDescription(name, "implicit")

    def collection_names(self) -> list[str]:
        with self._reading():
            return self._collection_names()

    def insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None:
        rows = list(rows)
        with self._mutating():
            desc = self.describe_collection(name)
            if desc.kind != "explicit":
                raise InvalidArgumentError(
                    f"collection {name!r} is {desc.kind}; only explicit collections accept rows"
                )
            checked = []
            for row in rows:
                if not isinstance(row.token, Token):
                    raise InvalidArgumentError("row token must be a Token")
                checked.append(CollectionRow(row.token, check_row(desc.schema, row.attributes)))
            self._insert_rows(name, checked)

    def iter_rows(self, name: str) -> Iterator[CollectionRow]:
        """Rows of an explicit collection (insertion order) or an implicit one (item order)."""
        desc = self.describe_collection(name)
        if desc.kind == "implicit":
            guid, container = parse_implicit_name(name)
            count = self.container_index(guid)[container]
            return (CollectionRow(Token(guid, container, i), {}) for i in range(count))
        if desc.kind != "explicit":
            raise InvalidArgumentError(f"collection {name!r} is hierarchical and has no rows of its own")
        return self._rows(name)

    def add_collection_child(self, parent: str, child: str) -> None:
        with self._mutating():
            desc = self.describe_collection(parent)
            if desc.kind != "hierarchical":
                raise InvalidArgumentError(f"collection {parent!r} is not hierarchical")
            self.describe_collection(child)
            if child in desc.children:
                return

            def children_of(n: str) -> tuple[str, ...]:
                return () if "/" in n else self._collection(n).children

            if would_cycle(parent, child, children_of):
                raise InvalidArgumentError(f"adding {child!r} under {parent!r} would create a cycle")
            self._add_child(parent, child)

    def register_container_index(self, file_id: str, container: str, count: int) -> None:
        guid = canonical_file_id(file_id)
        check_name(container, "container name")
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise InvalidArgumentError(f"container count must be a non-negative integer: {count!r}")
        with self._mutating():
            self._pfns(guid)
            self._register_container(guid, container, count)

    def container_index(self, file_id: str) -> dict[str, int]:
        guid = canonical_file_id(file_id)
        with self._reading():
            return self._containers(guid)


def implicit_name(file_id: str, container: str) -> str:
    return f"{canonical_file_id(file_id)}/{container}"


def parse_implicit_name(name: str) -> tuple[str, str] | None:
    guid, sep, container = name.partition("/")
    if not sep:
        return None
    if not container:
        raise InvalidArgumentError(f"malformed implicit collection name: {name!r}")
    return canonical_file_id(guid), container


def would_cycle(parent: str, child: str, children_of) -> bool:
    """True if adding parent→child closes a cycle (child reaches parent)."""
    stack, seen = [child], set()
    while stack:
        node = stack.pop()
        if node == parent:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(children_of(node))
    return False
