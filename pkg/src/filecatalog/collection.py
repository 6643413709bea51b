"""Collections of object references, read through one interface.

Explicit collections are stored rows; implicit ones are derived from the
container index of a file; hierarchical ones name other collections. All of
them can be iterated and selected with the same calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from . import query
from .catalog import COLLECTION_NAME_ATTR, CollectionDescription, CollectionRow, FileCatalog, implicit_name
from .errors import InvalidArgumentError
from .model import AttributeSchema, Token, Value


@dataclass(frozen=True)
class SelectedRow:
    """A selected row together with the leaf collection it came from."""

    collection: str
    row: CollectionRow


class Collection:
    """Handle on one collection of a catalog."""

    def __init__(self, catalog: FileCatalog, name: str) -> None:
        self.catalog = catalog
        self.name = name
        self.description = catalog.describe_collection(name)

    def __repr__(self) -> str:
        return f"Collection({self.name!r}, kind={self.kind!r})"

    @property
    def kind(self) -> str:
        return self.description.kind

    @property
    def schema(self) -> AttributeSchema:
        return self.description.schema

    def insert(self, token: Token | str, values: Mapping[str, Value] | None = None) -> None:
        tok = Token.parse(token) if isinstance(token, str) else token
        self.catalog.insert_rows(self.name, [CollectionRow(tok, dict(values or {}))])

    def insert_many(self, rows: Iterable[tuple[Token, Mapping[str, Value]]]) -> None:
        self.catalog.insert_rows(self.name, [CollectionRow(t, dict(v)) for t, v in rows])

    def __iter__(self) -> Iterator[CollectionRow]:
        if self.kind == "hierarchical":
            return select(self.catalog, [self.name])
        return self.catalog.iter_rows(self.name)

    def select(self, predicate: query.Predicate | str | None = None) -> Iterator[CollectionRow]:
        return select(self.catalog, [self.name], predicate)

    def count(self) -> int:
        return sum(1 for _ in self)

    def add_child(self, child: str) -> None:
        self.catalog.add_collection_child(self.name, child)
        self.description = self.catalog.describe_collection(self.name)


def create_collection(
    catalog: FileCatalog,
    name: str,
    schema: AttributeSchema | Iterable[tuple[str, str]] | None = None,
    *,
    kind: str = "explicit",
    metadata: Mapping[str, Value] | None = None,
) -> Collection:
    catalog.create_collection(name, schema, kind=kind, metadata=metadata)
    return Collection(catalog, name)


def open_collection(catalog: FileCatalog, name: str) -> Collection:
    return Collection(catalog, name)


def open_implicit(catalog: FileCatalog, file_id: str, container: str) -> Collection:
    """The objects of one container of a file, as registered in the container index."""
    return Collection(catalog, implicit_name(file_id, container))


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def leaves(catalog: FileCatalog, names: Sequence[str]) -> list[CollectionDescription]:
    """Flatten ``names`` to their non-hierarchical members, depth first, each once."""
    out: list[CollectionDescription] = []
    seen: set[str] = set()

    def visit(name: str) -> None:
        if name in seen:
            return
        seen.add(name)
        desc = catalog.describe_collection(name)
        if desc.kind == "hierarchical":
            for child in desc.children:
                visit(child)
        else:
            out.append(desc)

    for name in names:
        visit(name)
    return out


def merge_types(type_maps: Iterable[Mapping[str, str]]) -> dict[str, str]:
    """Union of attribute types; disagreeing attributes are marked as conflicts.

    int and float mix to float, since int literals and values widen.
    """
    view: dict[str, str] = {}
    for types in type_maps:
        for name, t in types.items():
            prev = view.get(name)
            if prev is None or prev == t:
                view[name] = t
            elif {prev, t} == {"int", "float"}:
                view[name] = "float"
            else:
                view[name] = query.CONFLICT
    return view


def object_view(descs: Sequence[CollectionDescription]) -> dict[str, str]:
    view = merge_types(d.schema.types() for d in descs)
    view[COLLECTION_NAME_ATTR] = "string"
    return view


def collection_view(descs: Sequence[CollectionDescription]) -> dict[str, str]:
    view = merge_types(d.metadata_types() for d in descs)
    view[COLLECTION_NAME_ATTR] = "string"
    return view


def _filtered(
    catalog: FileCatalog, descs: Sequence[CollectionDescription], pred: query.Predicate | None
) -> Iterator[SelectedRow]:
    for desc in descs:
        for row in catalog.iter_rows(desc.name):
            if pred is not None:
                values = dict(row.attributes)
                values[COLLECTION_NAME_ATTR] = desc.name
                if not query.evaluate(pred, values):
                    continue
            yield SelectedRow(desc.name, row)


def select_with_source(
    catalog: FileCatalog, names: Sequence[str], predicate: query.Predicate | str | None = None
) -> Iterator[SelectedRow]:
    if isinstance(names, str):
        raise InvalidArgumentError("select takes a list of collection names")
    descs = leaves(catalog, names)
    pred = query.prepare(predicate, object_view(descs))
    return _filtered(catalog, descs, pred)


def select(
    catalog: FileCatalog, names: Sequence[str], predicate: query.Predicate | str | None = None
) -> Iterator[CollectionRow]:
    """Rows of the named collections (hierarchical ones flattened) that satisfy ``predicate``.

    Rows come collection by collection, each in its own order. An attribute
    missing from some collection is null there.
    """
    return (s.row for s in select_with_source(catalog, names, predicate))


def select_hierarchical_with_source(
    catalog: FileCatalog,
    root: str,
    coll_predicate: query.Predicate | str | None = None,
    obj_predicate: query.Predicate | str | None = None,
) -> Iterator[SelectedRow]:
    if catalog.describe_collection(root).kind != "hierarchical":
        raise InvalidArgumentError(f"collection {root!r} is not hierarchical")
    descs = leaves(catalog, [root])
    cpred = query.prepare(coll_predicate, collection_view(descs))
    if cpred is not None:
        kept = []
        for d in descs:
            values = dict(d.metadata)
            values[COLLECTION_NAME_ATTR] = d.name
            if query.evaluate(cpred, values):
                kept.append(d)
    else:
        kept = descs
    opred = query.prepare(obj_predicate, object_view(descs))
    return _filtered(catalog, kept, opred)


def select_hierarchical(
    catalog: FileCatalog,
    root: str,
    coll_predicate: query.Predicate | str | None = None,
    obj_predicate: query.Predicate | str | None = None,
) -> Iterator[CollectionRow]:
    """Rows of the leaves under ``root`` whose collection metadata passes
    ``coll_predicate``, filtered by ``obj_predicate``; each leaf is read once."""
    return (s.row for s in select_hierarchical_with_source(catalog, root, coll_predicate, obj_predicate))


def distinct_file_ids(rows: Iterable[CollectionRow]) -> list[str]:
    """FileIDs referenced by ``rows``, in first-seen order (a job input manifest)."""
    seen: dict[str, None] = {}
    for row in rows:
        seen.setdefault(row.token.file_id, None)
    return list(seen)
