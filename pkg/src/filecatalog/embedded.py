"""Embedded transactional catalog on SQLite (WAL journal, full fsync on commit).

Layout: ``files(guid)``, ``pfns(name, guid, seq, filetype)``,
``lfns(name, guid, seq)``, one wide ``meta`` row per guid with a column per
schema attribute, ``schema_registry``, plus the collection and container
index tables. Predicates are translated to SQL and evaluated by the store.
"""

from __future__ import annotations

import json
import os
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Sequence

from . import query
from .catalog import CollectionDescription, CollectionRow, FileCatalog
from .errors import (
    CatalogIOError,
    ConflictError,
    CorruptCatalogError,
    DuplicateError,
    InvalidArgumentError,
    NotFoundError,
)
from .model import (
    PFN,
    Attribute,
    AttributeSchema,
    CatalogEntry,
    Token,
    Value,
    check_value,
)

PAGE_SIZE = 1000
MODES = ("read", "update", "create")

_DDL = """
CREATE TABLE IF NOT EXISTS files (guid TEXT PRIMARY KEY) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS pfns (
    name TEXT PRIMARY KEY,
    guid TEXT NOT NULL REFERENCES files(guid) ON DELETE CASCADE,
    seq INTEGER NOT NULL,
    filetype TEXT
) WITHOUT ROWID;
CREATE INDEX IF NOT EXISTS pfns_by_guid ON pfns(guid, seq);
CREATE TABLE IF NOT EXISTS lfns (
    name TEXT PRIMARY KEY,
    guid TEXT NOT NULL REFERENCES files(guid) ON DELETE CASCADE,
    seq INTEGER NOT NULL
) WITHOUT ROWID;
CREATE INDEX IF NOT EXISTS lfns_by_guid ON lfns(guid, seq);
CREATE TABLE IF NOT EXISTS schema_registry (pos INTEGER PRIMARY KEY, name TEXT NOT NULL UNIQUE, type TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS meta (guid TEXT PRIMARY KEY REFERENCES files(guid) ON DELETE CASCADE) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS containers (
    guid TEXT NOT NULL REFERENCES files(guid) ON DELETE CASCADE,
    name TEXT NOT NULL,
    count INTEGER NOT NULL,
    PRIMARY KEY (guid, name)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS collections (
    name TEXT PRIMARY KEY,
    pos INTEGER NOT NULL,
    kind TEXT NOT NULL,
    schema TEXT NOT NULL,
    metadata TEXT NOT NULL,
    children TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS coll_rows (
    coll TEXT NOT NULL,
    seq INTEGER NOT NULL,
    token TEXT NOT NULL,
    attrs TEXT NOT NULL,
    PRIMARY KEY (coll, seq)
) WITHOUT ROWID;
"""

_SQL_TYPES = {"string": "TEXT", "int": "INTEGER", "float": "REAL", "bool": "INTEGER"}


def _col(attr: str) -> str:
    return f'"m_{attr}"'


def like_to_glob(pattern: str) -> str:
    """Translate a LIKE pattern to an equivalent case-sensitive GLOB pattern."""
    out = []
    for ch in pattern:
        if ch == "%":
            out.append("*")
        elif ch == "_":
            out.append("?")
        elif ch in "*?[":
            out.append(f"[{ch}]")
        else:
            out.append(ch)
    return "".join(out)


def predicate_sql(p: query.Predicate, params: list[Any]) -> str:
    """Compile a typechecked predicate into a WHERE fragment over ``files f LEFT JOIN meta m``.

    Every comparison is wrapped so that null yields false rather than
    SQL's unknown, matching the two-valued evaluator.
    """
    if isinstance(p, query.Comparison):
        if p.op == "LIKE":
            test = "{} GLOB ?"
            params.append(like_to_glob(p.value))
        else:
            test = "{} " + p.op + " ?"
            params.append(p.value)
        if p.attr == "guid":
            return test.format("f.guid")
        if p.attr in ("pfname", "lfname"):
            table = "pfns" if p.attr == "pfname" else "lfns"
            return f"EXISTS (SELECT 1 FROM {table} x WHERE x.guid = f.guid AND {test.format('x.name')})"
        return f"COALESCE({test.format('m.' + _col(p.attr))}, 0)"
    if isinstance(p, query.Not):
        return f"(NOT {predicate_sql(p.operand, params)})"
    word = "AND" if isinstance(p, query.And) else "OR"
    return f"({predicate_sql(p.left, params)} {word} {predicate_sql(p.right, params)})"


class EmbeddedCatalog(FileCatalog):
    """Catalog handle on one SQLite connection.

    Any number of handles may read concurrently; writers serialize on the
    store's write lock (``BEGIN IMMEDIATE``) and readers see the last
    committed state.
    """

    scheme = "embedded"

    def __init__(
        self,
        path: str | os.PathLike[str],
        mode: str = "update",
        *,
        autocommit: bool = True,
        timeout: float = 30.0,
    ) -> None:
        if mode not in MODES:
            raise InvalidArgumentError(f"unknown open mode {mode!r}; expected one of {MODES}")
        super().__init__(writable=mode != "read", autocommit=autocommit)
        self.path = Path(path)
        self.mode = mode
        exists = self.path.exists() and self.path.stat().st_size > 0
        if mode == "create" and exists:
            raise InvalidArgumentError(f"{self.path} already exists; open it in update mode")
        if mode != "create" and not exists:
            raise NotFoundError(f"no catalog at {self.path}")
        try:
            if mode == "read":
                uri = f"{self.path.resolve().as_uri()}?mode=ro"
                self._db = sqlite3.connect(uri, uri=True, isolation_level=None, check_same_thread=False, timeout=timeout)
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._db = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False, timeout=timeout)
            self._db.execute("PRAGMA foreign_keys = ON")
            if mode != "read":
                self._db.execute("PRAGMA synchronous = FULL")
                if not exists:
                    self._db.execute("PRAGMA journal_mode = WAL")
                    self._db.execute("BEGIN IMMEDIATE")
                    for stmt in _DDL.split(";"):
                        if stmt.strip():
                            self._db.execute(stmt)
                    self._db.execute("COMMIT")
            self._check_layout()
        except sqlite3.OperationalError as exc:
            self._close_quietly()
            if "locked" in str(exc) or "busy" in str(exc):
                raise ConflictError(f"{self.path}: {exc}") from None
            raise CorruptCatalogError(f"{self.path}: {exc}") from None
        except sqlite3.DatabaseError as exc:
            self._close_quietly()
            raise CorruptCatalogError(f"{self.path}: {exc}") from None
        except CorruptCatalogError:
            self._close_quietly()
            raise
        self._schema_cache: tuple[int, AttributeSchema] | None = None

    def __repr__(self) -> str:
        return f"EmbeddedCatalog({str(self.path)!r}, mode={self.mode!r})"

    def _close_quietly(self) -> None:
        db = getattr(self, "_db", None)
        if db is not None:
            db.close()

    def _check_layout(self) -> None:
        names = {r[0] for r in self._db.execute("SELECT name FROM sqlite_master WHERE type = 'table'")}
        missing = {"files", "pfns", "lfns", "meta", "schema_registry"} - names
        if missing:
            raise CorruptCatalogError(f"{self.path} is not a catalog store (missing {sorted(missing)})")

    def _close(self) -> None:
        self._db.close()

    # ------------------------------------------------------------------
    # transactions
    # ------------------------------------------------------------------

    def _exec(self, sql: str, params: Sequence[Any] = ()) -> sqlite3.Cursor:
        try:
            return self._db.execute(sql, params)
        except sqlite3.IntegrityError as exc:
            raise DuplicateError(f"constraint violated: {exc}") from None
        except sqlite3.OperationalError as exc:
            if "locked" in str(exc) or "busy" in str(exc):
                raise ConflictError(f"store is locked: {exc}") from None
            raise CatalogIOError(f"store error: {exc}") from None

    def _begin(self) -> None:
        self._exec("BEGIN IMMEDIATE")

    def _commit(self) -> None:
        try:
            self._db.execute("COMMIT")
        except sqlite3.Error as exc:
            raise CatalogIOError(f"commit failed: {exc}") from None

    def _rollback(self) -> None:
        self._schema_cache = None
        if self._db.in_transaction:
            self._db.execute("ROLLBACK")

    @contextmanager
    def _savepoint(self) -> Iterator[None]:
        self._db.execute("SAVEPOINT op")
        try:
            yield
        except BaseException:
            self._db.execute("ROLLBACK TO op")
            self._db.execute("RELEASE op")
            raise
        self._db.execute("RELEASE op")

    # ------------------------------------------------------------------
    # replicas
    # ------------------------------------------------------------------

    def _require(self, guid: str) -> None:
        if self._exec("SELECT 1 FROM files WHERE guid = ?", (guid,)).fetchone() is None:
            raise NotFoundError(f"no such file id: {guid}")

    def _create_entry(self, guid: str, pfn: PFN) -> None:
        if self._exec("SELECT 1 FROM files WHERE guid = ?", (guid,)).fetchone():
            raise DuplicateError(f"file id {guid} already exists")
        row = self._exec("SELECT guid FROM pfns WHERE name = ?", (pfn.name,)).fetchone()
        if row:
            raise DuplicateError(f"PFN {pfn.name!r} is already registered to {row[0]}")
        with self._savepoint():
            self._exec("INSERT INTO files (guid) VALUES (?)", (guid,))
            self._exec(
                "INSERT INTO pfns (name, guid, seq, filetype) VALUES (?, ?, 1, ?)",
                (pfn.name, guid, pfn.filetype),
            )

    def _add_replica(self, guid: str, pfn: PFN) -> None:
        self._require(guid)
        row = self._exec("SELECT guid FROM pfns WHERE name = ?", (pfn.name,)).fetchone()
        if row:
            raise DuplicateError(f"PFN {pfn.name!r} is already registered to {row[0]}")
        self._exec(
            "INSERT INTO pfns (name, guid, seq, filetype) "
            "VALUES (?, ?, (SELECT COALESCE(MAX(seq), 0) + 1 FROM pfns WHERE guid = ?), ?)",
            (pfn.name, guid, guid, pfn.filetype),
        )

    def _pfns(self, guid: str) -> list[PFN]:
        rows = self._exec("SELECT name, filetype FROM pfns WHERE guid = ? ORDER BY seq", (guid,)).fetchall()
        if not rows:
            raise NotFoundError(f"no such file id: {guid}")
        return [PFN(n, t) for n, t in rows]

    def _pfn_owner(self, name: str) -> str:
        row = self._exec("SELECT guid FROM pfns WHERE name = ?", (name,)).fetchone()
        if row is None:
            raise NotFoundError(f"no such PFN: {name!r}")
        return row[0]

    def _add_lfn(self, guid: str, lfn: str) -> None:
        self._require(guid)
        row = self._exec("SELECT guid FROM lfns WHERE name = ?", (lfn,)).fetchone()
        if row:
            raise DuplicateError(f"LFN {lfn!r} is already registered to {row[0]}")
        self._exec(
            "INSERT INTO lfns (name, guid, seq) "
            "VALUES (?, ?, (SELECT COALESCE(MAX(seq), 0) + 1 FROM lfns WHERE guid = ?))",
            (lfn, guid, guid),
        )

    def _lfn_owner(self, lfn: str) -> str:
        row = self._exec("SELECT guid FROM lfns WHERE name = ?", (lfn,)).fetchone()
        if row is None:
            raise NotFoundError(f"no such LFN: {lfn!r}")
        return row[0]

    def _lfns(self, guid: str) -> list[str]:
        self._require(guid)
        return [r[0] for r in self._exec("SELECT name FROM lfns WHERE guid = ? ORDER BY seq", (guid,))]

    def _delete_entry(self, guid: str) -> None:
        if self._exec("DELETE FROM files WHERE guid = ?", (guid,)).rowcount == 0:
            raise NotFoundError(f"no such file id: {guid}")

    def _delete_pfn(self, name: str) -> None:
        guid = self._pfn_owner(name)
        (n,) = self._exec("SELECT COUNT(*) FROM pfns WHERE guid = ?", (guid,)).fetchone()
        if n == 1:
            self._delete_entry(guid)
        else:
            self._exec("DELETE FROM pfns WHERE name = ?", (name,))

    # ------------------------------------------------------------------
    # metadata
    # ------------------------------------------------------------------

    def _schema(self) -> AttributeSchema:
        (version,) = self._db.execute("PRAGMA schema_version").fetchone()
        cached = self._schema_cache
        if cached is not None and cached[0] == version:
            return cached[1]
        rows = self._exec("SELECT name, type FROM schema_registry ORDER BY pos").fetchall()
        schema = AttributeSchema(tuple(Attribute(n, t) for n, t in rows))
        self._schema_cache = (version, schema)
        return schema

    def _define_schema(self, schema: AttributeSchema) -> None:
        if self._exec("SELECT 1 FROM meta LIMIT 1").fetchone():
            raise ConflictError("metadata values exist; the schema can no longer be redefined")
        cols = "".join(f", {_col(a.name)} {_SQL_TYPES[a.type]}" for a in schema)
        with self._savepoint():
            self._exec("DROP TABLE meta")
            self._exec(
                f"CREATE TABLE meta (guid TEXT PRIMARY KEY REFERENCES files(guid) ON DELETE CASCADE{cols}) WITHOUT ROWID"
            )
            self._exec("DELETE FROM schema_registry")
            self._db.executemany(
                "INSERT INTO schema_registry (pos, name, type) VALUES (?, ?, ?)",
                [(i, a.name, a.type) for i, a in enumerate(schema)],
            )
        self._schema_cache = None

    def _set_metadata(self, guid: str, attr: str, value: Value) -> None:
        self._require(guid)
        types = self._schema().types()
        if attr not in types:
            raise InvalidArgumentError(f"unknown attribute: {attr!r}")
        value = check_value(types[attr], value, attr)
        col = _col(attr)
        self._exec(
            f"INSERT INTO meta (guid, {col}) VALUES (?, ?) ON CONFLICT (guid) DO UPDATE SET {col} = excluded.{col}",
            (guid, value),
        )

    def _decode_meta(self, schema: AttributeSchema, values: Sequence[Any]) -> dict[str, Value]:
        out: dict[str, Value] = {}
        for attr, v in zip(schema.attributes, values):
            if v is None:
                continue
            if attr.type == "bool":
                v = bool(v)
            elif attr.type == "float":
                v = float(v)
            out[attr.name] = v
        return out

    def _meta_select(self, schema: AttributeSchema) -> str:
        return ", ".join(["guid"] + [_col(a.name) for a in schema]) + " FROM meta"

    def _metadata(self, guid: str) -> dict[str, Value]:
        self._require(guid)
        schema = self._schema()
        row = self._exec(f"SELECT {self._meta_select(schema)} WHERE guid = ?", (guid,)).fetchone()
        return {} if row is None else self._decode_meta(schema, row[1:])

    # ------------------------------------------------------------------
    # enumeration
    # ------------------------------------------------------------------

    def _page(self, after: str, where: str, params: list[Any], limit: int) -> list[CatalogEntry]:
        with self._lock:
            self._check_open()
            guids = [
                r[0]
                for r in self._exec(
                    f"SELECT f.guid FROM files f LEFT JOIN meta m ON m.guid = f.guid "
                    f"WHERE f.guid > ? AND {where} ORDER BY f.guid LIMIT ?",
                    [after, *params, limit],
                )
            ]
            if not guids:
                return []
            marks = ",".join("?" * len(guids))
            pfns: dict[str, list[PFN]] = {g: [] for g in guids}
            for g, n, t in self._exec(
                f"SELECT guid, name, filetype FROM pfns WHERE guid IN ({marks}) ORDER BY guid, seq", guids
            ):
                pfns[g].append(PFN(n, t))
            lfns: dict[str, list[str]] = {g: [] for g in guids}
            for g, n in self._exec(f"SELECT guid, name FROM lfns WHERE guid IN ({marks}) ORDER BY guid, seq", guids):
                lfns[g].append(n)
            schema = self._schema()
            meta = {
                row[0]: self._decode_meta(schema, row[1:])
                for row in self._exec(f"SELECT {self._meta_select(schema)} WHERE guid IN ({marks})", guids)
            }
        return [CatalogEntry(g, tuple(pfns[g]), tuple(lfns[g]), meta.get(g, {})) for g in guids]

    def iter_pages(
        self, predicate: query.Predicate | None = None, *, after: str = "", page_size: int = PAGE_SIZE
    ) -> Iterator[list[CatalogEntry]]:
        """Yield pages of entries in FileID order, starting after ``after``."""
        params: list[Any] = []
        where = "1" if predicate is None else predicate_sql(predicate, params)
        while True:
            page = self._page(after, where, params, page_size)
            if not page:
                return
            yield page
            if len(page) < page_size:
                return
            after = page[-1].file_id

    def _entries(self, predicate: query.Predicate | None) -> Iterator[CatalogEntry]:
        for page in self.iter_pages(predicate):
            yield from page

    def pushdown_enumerate(self, predicate: query.Predicate | str | None = None) -> Iterator[CatalogEntry]:
        """Enumerate with the predicate evaluated inside the store."""
        return self.enumerate(predicate)

    def scan_enumerate(self, predicate: query.Predicate | str | None = None) -> Iterator[CatalogEntry]:
        """Enumerate everything and filter in Python (reference path for push-down)."""
        self._check_open()
        pred = query.prepare(predicate, self.query_view())
        for entry in self._entries(None):
            if pred is None or query.evaluate(pred, entry.query_row()):
                yield entry

    def count(self, predicate: query.Predicate | str | None = None) -> int:
        self._check_open()
        pred = query.prepare(predicate, self.query_view())
        params: list[Any] = []
        where = "1" if pred is None else predicate_sql(pred, params)
        with self._lock:
            (n,) = self._exec(
                f"SELECT COUNT(*) FROM files f LEFT JOIN meta m ON m.guid = f.guid WHERE {where}", params
            ).fetchone()
        return n

    # ------------------------------------------------------------------
    # collections
    # ------------------------------------------------------------------

    def _create_collection(self, desc: CollectionDescription) -> None:
        if self._exec("SELECT 1 FROM collections WHERE name = ?", (desc.name,)).fetchone():
            raise DuplicateError(f"collection {desc.name!r} already exists")
        self._exec(
            "INSERT INTO collections (name, pos, kind, schema, metadata, children) "
            "VALUES (?, (SELECT COALESCE(MAX(pos), 0) + 1 FROM collections), ?, ?, ?, ?)",
            (desc.name, desc.kind, json.dumps(desc.schema.pairs()), json.dumps(dict(desc.metadata)), json.dumps(list(desc.children))),
        )

    def _collection(self, name: str) -> CollectionDescription:
        row = self._exec("SELECT kind, schema, metadata, children FROM collections WHERE name = ?", (name,)).fetchone()
        if row is None:
            raise NotFoundError(f"no such collection: {name!r}")
        kind, schema, metadata, children = row
        return CollectionDescription(
            name, kind, AttributeSchema.of(json.loads(schema)), json.loads(metadata), tuple(json.loads(children))
        )

    def _collection_names(self) -> list[str]:
        return [r[0] for r in self._exec("SELECT name FROM collections ORDER BY pos")]

    def _insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None:
        (start,) = self._exec("SELECT COALESCE(MAX(seq), 0) FROM coll_rows WHERE coll = ?", (name,)).fetchone()
        self._db.executemany(
            "INSERT INTO coll_rows (coll, seq, token, attrs) VALUES (?, ?, ?, ?)",
            [
                (name, start + i + 1, str(r.token), json.dumps({k: v for k, v in r.attributes.items() if v is not None}))
                for i, r in enumerate(rows)
            ],
        )

    def _rows(self, name: str) -> Iterator[CollectionRow]:
        after = 0
        while True:
            with self._lock:
                self._check_open()
                page = self._exec(
                    "SELECT seq, token, attrs FROM coll_rows WHERE coll = ? AND seq > ? ORDER BY seq LIMIT ?",
                    (name, after, PAGE_SIZE),
                ).fetchall()
            for _, token, attrs in page:
                yield CollectionRow(Token.parse(token), json.loads(attrs))
            if len(page) < PAGE_SIZE:
                return
            after = page[-1][0]

    def _add_child(self, parent: str, child: str) -> None:
        desc = self._collection(parent)
        self._exec(
            "UPDATE collections SET children = ? WHERE name = ?",
            (json.dumps(list(desc.children) + [child]), parent),
        )

    def _register_container(self, guid: str, container: str, count: int) -> None:
        self._require(guid)
        self._exec(
            "INSERT INTO containers (guid, name, count) VALUES (?, ?, ?) "
            "ON CONFLICT (guid, name) DO UPDATE SET count = excluded.count",
            (guid, container, count),
        )

    def _containers(self, guid: str) -> dict[str, int]:
        self._require(guid)
        return dict(self._exec("SELECT name, count FROM containers WHERE guid = ? ORDER BY name", (guid,)).fetchall())
