"""Backend factories and observable-state snapshots shared by the tests."""

from __future__ import annotations

from contextlib import ExitStack
from pathlib import Path
from typing import Any

from filecatalog import FileCatalog, open_catalog
from filecatalog.errors import CatalogError
from filecatalog.service import ServiceConfig, serve

BACKENDS = ("xml", "embedded", "remote")


class Backends:
    """Creates catalogs of one backend kind under a temporary directory."""

    def __init__(self, kind: str, root: Path) -> None:
        self.kind = kind
        self.root = root
        self._stack = ExitStack()
        self._services: dict[str, Any] = {}

    def connection_string(self, name: str = "cat") -> str:
        if self.kind == "xml":
            return f"xmlcatalog_file:{self.root / (name + '.xml')}"
        if self.kind == "embedded":
            return f"embedded:{self.root / (name + '.db')}"
        svc = self._services.get(name)
        if svc is None:
            svc = serve(ServiceConfig(str(self.root / (name + "-service.db"))))
            self._stack.callback(svc.stop)
            self._services[name] = svc
        return f"remote:{svc.url}"

    def open(self, name: str = "cat", mode: str | None = None, *, autocommit: bool = True) -> FileCatalog:
        cat = open_catalog(self.connection_string(name), mode, autocommit=autocommit)
        self._stack.callback(_quiet_close, cat)
        return cat

    def close(self) -> None:
        self._stack.close()


def _quiet_close(cat: FileCatalog) -> None:
    try:
        cat.close()
    except CatalogError:
        pass


def entry_key(e) -> tuple:
    return (
        e.file_id,
        tuple((p.name, p.filetype) for p in e.pfns),
        tuple(e.lfns),
    )


def catalog_state(cat: FileCatalog) -> tuple:
    """Schema plus every entry with replicas (in order), aliases and full metadata row."""
    schema = tuple(cat.get_schema().pairs())
    names = [n for n, _ in schema]
    entries = tuple(
        sorted(
            entry_key(e) + (tuple(sorted((n, e.metadata.get(n)) for n in names)),)
            for e in cat.enumerate()
        )
    )
    return (schema, entries)


def lookup_state(cat: FileCatalog, pfns: list[str], lfns: list[str]) -> tuple:
    """Answers of the point lookups for every name in the pools ('-' for not found)."""

    def ask(fn, arg):
        try:
            return fn(arg)
        except CatalogError as exc:
            return exc.kind

    return (
        tuple(ask(cat.lookup_file_id, p) for p in pfns),
        tuple(ask(cat.lookup_by_lfn, x) for x in lfns),
    )


def full_state(cat: FileCatalog) -> tuple:
    """Catalog state plus all collections and container indexes."""
    colls = []
    for name in cat.collection_names():
        d = cat.describe_collection(name)
        rows = () if d.kind != "explicit" else tuple((str(r.token), tuple(sorted(r.attributes.items()))) for r in cat.iter_rows(name))
        colls.append((name, d.kind, tuple(d.schema.pairs()), tuple(sorted(d.metadata.items())), d.children, rows))
    containers = tuple(sorted((e.file_id, tuple(sorted(cat.container_index(e.file_id).items()))) for e in cat.enumerate()))
    return (catalog_state(cat), tuple(colls), containers)


def state_modulo_guid(cat: FileCatalog) -> tuple:
    """Catalog state with FileIDs replaced by their replica lists (for runs that mint fresh ids)."""
    schema, entries = catalog_state(cat)
    return (schema, tuple(sorted(e[1:] for e in entries)))
