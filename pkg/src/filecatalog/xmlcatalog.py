"""Single-document XML catalog for disconnected use and as the interchange format.

Document layout::

    <?xml version="1.0" encoding="UTF-8" standalone="no" ?>
    <POOLFILECATALOG>
      <META name="jobid" type="int"/>
      <File ID="1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f">
        <physical>
          <pfn filetype="ROOT_All" name="file:/data/a.root"/>
        </physical>
        <logical>
          <lfn name="run7.evts"/>
        </logical>
        <metadata att_name="jobid" att_value="7"/>
      </File>
    </POOLFILECATALOG>

Collections and the container index live in a sidecar document next to the
catalog (``<path>.collections.xml``).
"""

from __future__ import annotations

import io
import os
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence
from xml.sax.saxutils import quoteattr

from . import query
from .catalog import CollectionDescription, CollectionRow, FileCatalog
from .errors import (
    CatalogError,
    CatalogIOError,
    ConflictError,
    CorruptCatalogError,
    InvalidArgumentError,
    NotFoundError,
)
from .memory import MemoryStore, StoredCollection
from .model import (
    PFN,
    Attribute,
    AttributeSchema,
    CatalogEntry,
    Token,
    Value,
    canonical_file_id,
    decode_value,
    encode_value,
    value_type,
)

XML_DECL = '<?xml version="1.0" encoding="UTF-8" standalone="no" ?>\n'
MODES = ("read", "update", "create")


# ---------------------------------------------------------------------------
# document format
# ---------------------------------------------------------------------------


def write_catalog_xml(out: IO[str], schema: AttributeSchema, entries: Iterable[CatalogEntry]) -> int:
    """Serialise a catalog document; returns the number of File elements."""
    w = out.write
    w(XML_DECL)
    w("<POOLFILECATALOG>\n")
    for attr in schema:
        w(f"  <META name={quoteattr(attr.name)} type={quoteattr(attr.type)}/>\n")
    n = 0
    for entry in entries:
        n += 1
        w(f"  <File ID={quoteattr(entry.file_id)}>\n    <physical>\n")
        for p in entry.pfns:
            w(f"      <pfn filetype={quoteattr(p.filetype or '')} name={quoteattr(p.name)}/>\n")
        w("    </physical>\n")
        if entry.lfns:
            w("    <logical>\n")
            for lfn in entry.lfns:
                w(f"      <lfn name={quoteattr(lfn)}/>\n")
            w("    </logical>\n")
        else:
            w("    <logical/>\n")
        for attr in schema:
            value = entry.metadata.get(attr.name)
            if value is not None:
                w(
                    f"    <metadata att_name={quoteattr(attr.name)} "
                    f"att_value={quoteattr(encode_value(value))}/>\n"
                )
        w("  </File>\n")
    w("</POOLFILECATALOG>\n")
    return n


def catalog_xml_string(schema: AttributeSchema, entries: Iterable[CatalogEntry]) -> str:
    buf = io.StringIO()
    write_catalog_xml(buf, schema, entries)
    return buf.getvalue()


def _parse_root(source: str | Path | IO[bytes], root_tag: str) -> ET.Element:
    try:
        root = ET.parse(source).getroot()
    except ET.ParseError as exc:
        line, col = exc.position
        raise CorruptCatalogError(f"malformed XML at line {line}, column {col + 1}: {exc}") from None
    if root.tag != root_tag:
        raise CorruptCatalogError(f"expected root element {root_tag}, found {root.tag}")
    return root


def _attr(el: ET.Element, name: str) -> str:
    value = el.get(name)
    if value is None:
        raise CorruptCatalogError(f"<{el.tag}> is missing attribute {name!r}")
    return value


def parse_catalog_xml(source: str | Path | IO[bytes]) -> tuple[AttributeSchema, list[CatalogEntry]]:
    """Parse a catalog document into its schema and entries."""
    root = _parse_root(source, "POOLFILECATALOG")
    try:
        schema = AttributeSchema(
            tuple(Attribute(_attr(m, "name"), _attr(m, "type")) for m in root.iter("META"))
        )
        types = schema.types()
        entries = []
        for f in root.iter("File"):
            guid = canonical_file_id(_attr(f, "ID"))
            pfns = tuple(
                PFN(_attr(p, "name"), p.get("filetype") or None) for p in f.iterfind("physical/pfn")
            )
            lfns = tuple(_attr(lf, "name") for lf in f.iterfind("logical/lfn"))
            meta: dict[str, Value] = {}
            for m in f.iterfind("metadata"):
                name = _attr(m, "att_name")
                if name not in types:
                    raise CorruptCatalogError(f"file {guid}: metadata {name!r} not declared in META")
                meta[name] = decode_value(types[name], _attr(m, "att_value"))
            entries.append(CatalogEntry(guid, pfns, lfns, meta))
    except InvalidArgumentError as exc:
        raise CorruptCatalogError(str(exc)) from None
    return schema, entries


def _metadata_elements(parent: str, metadata: dict[str, Value]) -> Iterator[str]:
    for name, value in metadata.items():
        yield (
            f"{parent}<collmeta name={quoteattr(name)} type={quoteattr(value_type(value))} "
            f"value={quoteattr(encode_value(value))}/>\n"
        )


def write_collections_xml(out: IO[str], store: MemoryStore) -> None:
    w = out.write
    w(XML_DECL)
    w("<POOLCOLLECTIONS>\n")
    for coll in store.collections.values():
        d = coll.desc
        w(f"  <Collection name={quoteattr(d.name)} kind={quoteattr(d.kind)}>\n")
        for attr in d.schema:
            w(f"    <attribute name={quoteattr(attr.name)} type={quoteattr(attr.type)}/>\n")
        for line in _metadata_elements("    ", dict(d.metadata)):
            w(line)
        for child in d.children:
            w(f"    <child name={quoteattr(child)}/>\n")
        for row in coll.rows:
            w(f"    <row token={quoteattr(str(row.token))}")
            values = [(k, v) for k, v in row.attributes.items() if v is not None]
            if not values:
                w("/>\n")
                continue
            w(">\n")
            for name, value in values:
                w(f"      <value name={quoteattr(name)} value={quoteattr(encode_value(value))}/>\n")
            w("    </row>\n")
        w("  </Collection>\n")
    for guid, per_file in store.containers.items():
        for container, count in per_file.items():
            w(f"  <Container guid={quoteattr(guid)} name={quoteattr(container)} count=\"{count}\"/>\n")
    w("</POOLCOLLECTIONS>\n")


def load_collections_xml(source: str | Path, store: MemoryStore) -> None:
    root = _parse_root(source, "POOLCOLLECTIONS")
    try:
        for c in root.iter("Collection"):
            schema = AttributeSchema(
                tuple(Attribute(_attr(a, "name"), _attr(a, "type")) for a in c.iterfind("attribute"))
            )
            types = schema.types()
            meta = {
                _attr(m, "name"): decode_value(_attr(m, "type"), _attr(m, "value"))
                for m in c.iterfind("collmeta")
            }
            children = tuple(_attr(ch, "name") for ch in c.iterfind("child"))
            desc = CollectionDescription(_attr(c, "name"), _attr(c, "kind"), schema, meta, children)
            rows = []
            for r in c.iterfind("row"):
                values = {}
                for v in r.iterfind("value"):
                    name = _attr(v, "name")
                    if name not in types:
                        raise CorruptCatalogError(f"collection {desc.name!r}: undeclared attribute {name!r}")
                    values[name] = decode_value(types[name], _attr(v, "value"))
                rows.append(CollectionRow(Token.parse(_attr(r, "token")), values))
            store.collections[desc.name] = StoredCollection(desc, rows)
        for k in root.iter("Container"):
            guid = canonical_file_id(_attr(k, "guid"))
            store.containers.setdefault(guid, {})[_attr(k, "name")] = int(_attr(k, "count"))
    except (InvalidArgumentError, ValueError) as exc:
        raise CorruptCatalogError(str(exc)) from None


def atomic_write(path: Path, render) -> None:
    """Write via temp file + fsync + rename so readers never see a partial file."""
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            render(fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        dir_fd = os.open(path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
    except OSError as exc:
        try:
            tmp.unlink()
        except FileNotFoundError:
            pass
        raise CatalogIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# catalog handle
# ---------------------------------------------------------------------------


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class XmlCatalog(FileCatalog):
    """Whole-document XML catalog.

    The document is loaded into memory at open and rewritten in full at every
    commit. An advisory ``<path>.lock`` file keeps a second writer out.
    """

    scheme = "xmlcatalog_file"

    def __init__(self, path: str | os.PathLike[str], mode: str = "update", *, autocommit: bool = True) -> None:
        if mode not in MODES:
            raise InvalidArgumentError(f"unknown open mode {mode!r}; expected one of {MODES}")
        super().__init__(writable=mode != "read", autocommit=autocommit)
        self.path = Path(path)
        self.collections_path = self.path.with_name(self.path.name + ".collections.xml")
        self.lock_path = self.path.with_name(self.path.name + ".lock")
        self.mode = mode
        self.store = MemoryStore()
        self._stamp: tuple[int, int] | None = None
        self._locked = False

        exists = self.path.exists() and self.path.stat().st_size > 0
        if mode == "create" and exists:
            raise InvalidArgumentError(f"{self.path} already exists; open it in update mode")
        if mode != "create" and not exists:
            raise NotFoundError(f"no catalog at {self.path}")
        if self.writable:
            self._acquire_lock()
        try:
            if exists:
                self._load()
        except BaseException:
            self._release_lock()
            raise

    def __repr__(self) -> str:
        return f"XmlCatalog({str(self.path)!r}, mode={self.mode!r})"

    # locking and loading ----------------------------------------------

    def _acquire_lock(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
            except FileExistsError:
                try:
                    pid = int(self.lock_path.read_text().strip() or 0)
                except (OSError, ValueError):
                    pid = 0
                if pid and _pid_alive(pid):
                    raise ConflictError(f"{self.path} is locked by process {pid}") from None
                self.lock_path.unlink(missing_ok=True)
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self._locked = True
            return
        raise ConflictError(f"cannot lock {self.path}")

    def _release_lock(self) -> None:
        if self._locked:
            self.lock_path.unlink(missing_ok=True)
            self._locked = False

    def _file_stamp(self) -> tuple[int, int] | None:
        try:
            st = self.path.stat()
        except FileNotFoundError:
            return None
        return st.st_mtime_ns, st.st_size

    def _load(self) -> None:
        schema, entries = parse_catalog_xml(self.path)
        store = self.store
        store.schema = schema
        try:
            for entry in entries:
                store.load_entry(entry)
        except CatalogError as exc:
            raise CorruptCatalogError(f"{self.path}: {exc}") from None
        if self.collections_path.exists():
            load_collections_xml(self.collections_path, store)
        self._stamp = self._file_stamp()

    def _close(self) -> None:
        self._release_lock()

    # transactions -----------------------------------------------------

    def _begin(self) -> None:
        self.store.begin()

    def _commit(self) -> None:
        store = self.store
        if store.catalog_dirty or store.collections_dirty or self._stamp is None:
            current = self._file_stamp()
            if self._stamp is not None and current != self._stamp:
                raise ConflictError(f"{self.path} was modified by another process since it was loaded")
            if store.collections_dirty:
                atomic_write(self.collections_path, lambda fh: write_collections_xml(fh, store))
            if store.catalog_dirty or self._stamp is None:
                atomic_write(
                    self.path,
                    lambda fh: write_catalog_xml(fh, store.schema, store.iter_entries(None)),
                )
                self._stamp = self._file_stamp()
        store.commit()

    def _rollback(self) -> None:
        self.store.rollback()

    # primitives -------------------------------------------------------

    def _create_entry(self, guid: str, pfn: PFN) -> None:
        self.store.create_entry(guid, pfn)

    def _add_replica(self, guid: str, pfn: PFN) -> None:
        self.store.add_replica(guid, pfn)

    def _pfns(self, guid: str) -> list[PFN]:
        return self.store.pfns(guid)

    def _pfn_owner(self, name: str) -> str:
        return self.store.owner_of_pfn(name)

    def _add_lfn(self, guid: str, lfn: str) -> None:
        self.store.add_lfn(guid, lfn)

    def _lfn_owner(self, lfn: str) -> str:
        return self.store.owner_of_lfn(lfn)

    def _lfns(self, guid: str) -> list[str]:
        return self.store.lfns(guid)

    def _schema(self) -> AttributeSchema:
        return self.store.schema

    def _define_schema(self, schema: AttributeSchema) -> None:
        self.store.define_schema(schema)

    def _set_metadata(self, guid: str, attr: str, value: Value) -> None:
        self.store.set_metadata(guid, attr, value)

    def _metadata(self, guid: str) -> dict[str, Value]:
        return self.store.metadata(guid)

    def _entry(self, guid: str) -> CatalogEntry:
        return self.store.entry(guid)

    def _delete_entry(self, guid: str) -> None:
        self.store.delete_entry(guid)

    def _delete_pfn(self, name: str) -> None:
        self.store.delete_pfn(name)

    def _entries(self, predicate: query.Predicate | None) -> Iterator[CatalogEntry]:
        with self._lock:
            snapshot = list(self.store.iter_entries(None))
        if predicate is None:
            return iter(snapshot)
        return (e for e in snapshot if query.evaluate(predicate, e.query_row()))

    def _create_collection(self, desc: CollectionDescription) -> None:
        self.store.create_collection(desc)

    def _collection(self, name: str) -> CollectionDescription:
        return self.store.collection(name)

    def _collection_names(self) -> list[str]:
        return list(self.store.collections)

    def _insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None:
        self.store.insert_rows(name, rows)

    def _rows(self, name: str) -> Iterator[CollectionRow]:
        with self._lock:
            return self.store.rows(name)

    def _add_child(self, parent: str, child: str) -> None:
        self.store.add_child(parent, child)

    def _register_container(self, guid: str, container: str, count: int) -> None:
        self.store.register_container(guid, container, count)

    def _containers(self, guid: str) -> dict[str, int]:
        return self.store.container_counts(guid)
