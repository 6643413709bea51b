"""In-memory catalog state with an undo log, the working copy of an XML catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from . import query
from .catalog import CollectionDescription, CollectionRow
from .errors import ConflictError, DuplicateError, InvalidArgumentError, NotFoundError
from .model import PFN, AttributeSchema, CatalogEntry, Value, check_value


@dataclass
class _Entry:
    pfns: list[PFN] = field(default_factory=list)
    lfns: list[str] = field(default_factory=list)
    meta: dict[str, Value] = field(default_factory=dict)

    def freeze(self, guid: str) -> CatalogEntry:
        return CatalogEntry(guid, tuple(self.pfns), tuple(self.lfns), dict(self.meta))


@dataclass
class StoredCollection:
    desc: CollectionDescription
    rows: list[CollectionRow] = field(default_factory=list)


class MemoryStore:
    """All catalog and collection state of one document-backed catalog.

    Every mutator validates before it changes anything, then records its
    inverse while a transaction is open, so rollback restores the exact
    pre-transaction state.
    """

    def __init__(self) -> None:
        self.entries: dict[str, _Entry] = {}
        self.pfn_owner: dict[str, str] = {}
        self.lfn_owner: dict[str, str] = {}
        self.schema = AttributeSchema()
        self.collections: dict[str, StoredCollection] = {}
        self.containers: dict[str, dict[str, int]] = {}
        self._undo: list[Callable[[], None]] | None = None
        self.catalog_dirty = False
        self.collections_dirty = False

    # transactions ------------------------------------------------------

    def begin(self) -> None:
        self._undo = []
        self.catalog_dirty = self.collections_dirty = False

    def commit(self) -> None:
        self._undo = None
        self.catalog_dirty = self.collections_dirty = False

    def rollback(self) -> None:
        undo, self._undo = self._undo or [], None
        for step in reversed(undo):
            step()
        self.catalog_dirty = self.collections_dirty = False

    def _log(self, step: Callable[[], None], *, collections: bool = False) -> None:
        if self._undo is not None:
            self._undo.append(step)
        if collections:
            self.collections_dirty = True
        else:
            self.catalog_dirty = True

    def _get(self, guid: str) -> _Entry:
        try:
            return self.entries[guid]
        except KeyError:
            raise NotFoundError(f"no such file id: {guid}") from None

    # loading (no undo) -------------------------------------------------

    def load_entry(self, entry: CatalogEntry) -> None:
        if entry.file_id in self.entries:
            raise DuplicateError(f"file id {entry.file_id} appears twice")
        for p in entry.pfns:
            if p.name in self.pfn_owner:
                raise DuplicateError(f"PFN {p.name!r} appears under two file ids")
        for lfn in entry.lfns:
            if lfn in self.lfn_owner:
                raise DuplicateError(f"LFN {lfn!r} appears under two file ids")
        if not entry.pfns:
            raise InvalidArgumentError(f"file {entry.file_id} has no replicas")
        self.entries[entry.file_id] = _Entry(list(entry.pfns), list(entry.lfns), dict(entry.metadata))
        for p in entry.pfns:
            self.pfn_owner[p.name] = entry.file_id
        for lfn in entry.lfns:
            self.lfn_owner[lfn] = entry.file_id

    # replicas ----------------------------------------------------------

    def create_entry(self, guid: str, pfn: PFN) -> None:
        if guid in self.entries:
            raise DuplicateError(f"file id {guid} already exists")
        if pfn.name in self.pfn_owner:
            raise DuplicateError(f"PFN {pfn.name!r} is already registered to {self.pfn_owner[pfn.name]}")
        self.entries[guid] = _Entry([pfn])
        self.pfn_owner[pfn.name] = guid

        def undo() -> None:
            del self.entries[guid]
            del self.pfn_owner[pfn.name]

        self._log(undo)

    def add_replica(self, guid: str, pfn: PFN) -> None:
        entry = self._get(guid)
        if pfn.name in self.pfn_owner:
            raise DuplicateError(f"PFN {pfn.name!r} is already registered to {self.pfn_owner[pfn.name]}")
        entry.pfns.append(pfn)
        self.pfn_owner[pfn.name] = guid

        def undo() -> None:
            entry.pfns.pop()
            del self.pfn_owner[pfn.name]

        self._log(undo)

    def pfns(self, guid: str) -> list[PFN]:
        return list(self._get(guid).pfns)

    def owner_of_pfn(self, name: str) -> str:
        try:
            return self.pfn_owner[name]
        except KeyError:
            raise NotFoundError(f"no such PFN: {name!r}") from None

    def add_lfn(self, guid: str, lfn: str) -> None:
        entry = self._get(guid)
        if lfn in self.lfn_owner:
            raise DuplicateError(f"LFN {lfn!r} is already registered to {self.lfn_owner[lfn]}")
        entry.lfns.append(lfn)
        self.lfn_owner[lfn] = guid

        def undo() -> None:
            entry.lfns.pop()
            del self.lfn_owner[lfn]

        self._log(undo)

    def owner_of_lfn(self, lfn: str) -> str:
        try:
            return self.lfn_owner[lfn]
        except KeyError:
            raise NotFoundError(f"no such LFN: {lfn!r}") from None

    def lfns(self, guid: str) -> list[str]:
        return list(self._get(guid).lfns)

    def delete_entry(self, guid: str) -> None:
        entry = self.entries.pop(guid, None)
        if entry is None:
            raise NotFoundError(f"no such file id: {guid}")
        for p in entry.pfns:
            del self.pfn_owner[p.name]
        for lfn in entry.lfns:
            del self.lfn_owner[lfn]
        containers = self.containers.pop(guid, None)

        def undo() -> None:
            self.entries[guid] = entry
            for p in entry.pfns:
                self.pfn_owner[p.name] = guid
            for lfn in entry.lfns:
                self.lfn_owner[lfn] = guid
            if containers is not None:
                self.containers[guid] = containers

        self._log(undo)
        if containers is not None:
            self.collections_dirty = True

    def delete_pfn(self, name: str) -> None:
        guid = self.owner_of_pfn(name)
        entry = self.entries[guid]
        if len(entry.pfns) == 1:
            self.delete_entry(guid)
            return
        index = next(i for i, p in enumerate(entry.pfns) if p.name == name)
        removed = entry.pfns.pop(index)
        del self.pfn_owner[name]

        def undo() -> None:
            entry.pfns.insert(index, removed)
            self.pfn_owner[name] = guid

        self._log(undo)

    # metadata ----------------------------------------------------------

    def define_schema(self, schema: AttributeSchema) -> None:
        if any(e.meta for e in self.entries.values()):
            raise ConflictError("metadata values exist; the schema can no longer be redefined")
        old = self.schema
        self.schema = schema

        def undo() -> None:
            self.schema = old

        self._log(undo)

    def set_metadata(self, guid: str, attr: str, value: Value) -> None:
        entry = self._get(guid)
        types = self.schema.types()
        if attr not in types:
            raise InvalidArgumentError(f"unknown attribute: {attr!r}")
        value = check_value(types[attr], value, attr)
        had = attr in entry.meta
        old = entry.meta.get(attr)
        entry.meta[attr] = value

        def undo() -> None:
            if had:
                entry.meta[attr] = old
            else:
                del entry.meta[attr]

        self._log(undo)

    def metadata(self, guid: str) -> dict[str, Value]:
        return dict(self._get(guid).meta)

    def entry(self, guid: str) -> CatalogEntry:
        return self._get(guid).freeze(guid)

    def iter_entries(self, predicate: query.Predicate | None) -> Iterator[CatalogEntry]:
        for guid, entry in list(self.entries.items()):
            frozen = entry.freeze(guid)
            if predicate is None or query.evaluate(predicate, frozen.query_row()):
                yield frozen

    # collections -------------------------------------------------------

    def _coll(self, name: str) -> StoredCollection:
        try:
            return self.collections[name]
        except KeyError:
            raise NotFoundError(f"no such collection: {name!r}") from None

    def create_collection(self, desc: CollectionDescription) -> None:
        if desc.name in self.collections:
            raise DuplicateError(f"collection {desc.name!r} already exists")
        self.collections[desc.name] = StoredCollection(desc)

        def undo() -> None:
            del self.collections[desc.name]

        self._log(undo, collections=True)

    def collection(self, name: str) -> CollectionDescription:
        return self._coll(name).desc

    def insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None:
        coll = self._coll(name)
        before = len(coll.rows)
        coll.rows.extend(rows)

        def undo() -> None:
            del coll.rows[before:]

        self._log(undo, collections=True)

    def rows(self, name: str) -> Iterator[CollectionRow]:
        return iter(list(self._coll(name).rows))

    def add_child(self, parent: str, child: str) -> None:
        coll = self._coll(parent)
        old = coll.desc
        coll.desc = CollectionDescription(old.name, old.kind, old.schema, old.metadata, old.children + (child,))

        def undo() -> None:
            coll.desc = old

        self._log(undo, collections=True)

    def register_container(self, guid: str, container: str, count: int) -> None:
        self._get(guid)
        per_file = self.containers.setdefault(guid, {})
        had = container in per_file
        old = per_file.get(container)
        per_file[container] = count

        def undo() -> None:
            if had:
                per_file[container] = old
            else:
                del per_file[container]
                if not per_file:
                    self.containers.pop(guid, None)

        self._log(undo, collections=True)

    def container_counts(self, guid: str) -> dict[str, int]:
        self._get(guid)
        return dict(self.containers.get(guid, {}))
