"""Wire vocabulary: JSON encodings and the operation dispatcher.

Every catalog operation has a name and a JSON argument document. The service
maps its REST routes and the ``/batch`` endpoint onto :func:`execute`, and the
remote client buffers the same documents inside a transaction.
"""

from __future__ import annotations

from typing import Any, Mapping

from .catalog import CollectionDescription, CollectionRow, FileCatalog
from .errors import CatalogError, ConflictError, InvalidArgumentError, QuerySyntaxError, error_from_kind
from .model import PFN, AttributeSchema, CatalogEntry, Token


def pfn_to_json(p: PFN) -> dict[str, Any]:
    return {"name": p.name, "filetype": p.filetype}


def pfn_from_json(d: Mapping[str, Any]) -> PFN:
    return PFN(d["name"], d.get("filetype"))


def entry_to_json(e: CatalogEntry) -> dict[str, Any]:
    return {
        "guid": e.file_id,
        "pfns": [pfn_to_json(p) for p in e.pfns],
        "lfns": list(e.lfns),
        "metadata": dict(e.metadata),
    }


def entry_from_json(d: Mapping[str, Any]) -> CatalogEntry:
    return CatalogEntry(
        d["guid"], tuple(pfn_from_json(p) for p in d["pfns"]), tuple(d["lfns"]), dict(d["metadata"])
    )


def schema_to_json(s: AttributeSchema) -> list[list[str]]:
    return [[n, t] for n, t in s.pairs()]


def schema_from_json(d: Any) -> AttributeSchema:
    return AttributeSchema.of([tuple(x) for x in d])


def collection_to_json(c: CollectionDescription) -> dict[str, Any]:
    return {
        "name": c.name,
        "kind": c.kind,
        "schema": schema_to_json(c.schema),
        "metadata": dict(c.metadata),
        "children": list(c.children),
    }


def collection_from_json(d: Mapping[str, Any]) -> CollectionDescription:
    return CollectionDescription(
        d["name"], d["kind"], schema_from_json(d["schema"]), dict(d["metadata"]), tuple(d["children"])
    )


def row_to_json(r: CollectionRow) -> dict[str, Any]:
    return {"token": str(r.token), "attributes": dict(r.attributes)}


def row_from_json(d: Mapping[str, Any]) -> CollectionRow:
    return CollectionRow(Token.parse(d["token"]), dict(d.get("attributes") or {}))


def error_to_json(exc: CatalogError) -> dict[str, Any]:
    out: dict[str, Any] = {"status": exc.kind, "message": str(exc)}
    if isinstance(exc, QuerySyntaxError):
        out["column"] = exc.column
        out["message"] = str(exc)
    return out


def error_from_json(d: Mapping[str, Any]) -> CatalogError:
    return error_from_kind(d.get("status", "server-error"), d.get("message", ""), d.get("column"))


READ_OPS = frozenset(
    {
        "lookup_all_pfns",
        "lookup_file_id",
        "lookup_by_lfn",
        "lookup_lfns",
        "get_entry",
        "get_schema",
        "get_metadata",
        "enumerate",
        "count",
        "describe_collection",
        "collection_names",
        "iter_rows",
        "container_index",
    }
)


def _arg(op: Mapping[str, Any], key: str) -> Any:
    try:
        return op[key]
    except KeyError:
        raise InvalidArgumentError(f"operation {op.get('op')!r} is missing argument {key!r}") from None


def execute(cat: FileCatalog, op: Mapping[str, Any]) -> Any:
    """Run one wire operation against ``cat`` and return its JSON result."""
    name = op.get("op")
    if name == "register_file":
        guid, created = cat.register_file(PFN(_arg(op, "pfn"), op.get("filetype")), file_id=op.get("guid"))
        expect = op.get("expect_guid")
        if expect is not None and expect != guid:
            raise ConflictError(
                f"PFN {op['pfn']!r} now belongs to {guid}, not {expect} as seen inside the transaction"
            )
        return {"guid": guid, "created": created}
    if name == "create_entry":
        cat.create_entry(_arg(op, "guid"), PFN(_arg(op, "pfn"), op.get("filetype")))
        return None
    if name == "add_replica":
        cat.add_replica(_arg(op, "guid"), PFN(_arg(op, "pfn"), op.get("filetype")))
        return None
    if name == "lookup_all_pfns":
        return [pfn_to_json(p) for p in cat.lookup_all_pfns(_arg(op, "guid"))]
    if name == "lookup_file_id":
        return cat.lookup_file_id(_arg(op, "pfn"))
    if name == "add_lfn":
        cat.add_lfn(_arg(op, "guid"), _arg(op, "lfn"))
        return None
    if name == "lookup_by_lfn":
        return cat.lookup_by_lfn(_arg(op, "lfn"))
    if name == "lookup_lfns":
        return cat.lookup_lfns(_arg(op, "guid"))
    if name == "get_entry":
        return entry_to_json(cat.get_entry(_arg(op, "guid")))
    if name == "define_schema":
        cat.define_metadata_schema(schema_from_json(_arg(op, "schema")))
        return None
    if name == "get_schema":
        return schema_to_json(cat.get_schema())
    if name == "set_metadata":
        cat.set_metadata(_arg(op, "guid"), _arg(op, "attr"), _arg(op, "value"))
        return None
    if name == "get_metadata":
        return cat.get_metadata(_arg(op, "guid"))
    if name == "delete_entry":
        cat.delete_entry(_arg(op, "guid"))
        return None
    if name == "delete_pfn":
        cat.delete_pfn(_arg(op, "pfn"))
        return None
    if name == "enumerate":
        return [entry_to_json(e) for e in cat.enumerate(op.get("query"))]
    if name == "count":
        return cat.count(op.get("query"))
    if name == "create_collection":
        desc = cat.create_collection(
            _arg(op, "name"),
            schema_from_json(op.get("schema") or []),
            kind=op.get("kind", "explicit"),
            metadata=op.get("metadata"),
        )
        return collection_to_json(desc)
    if name == "describe_collection":
        return collection_to_json(cat.describe_collection(_arg(op, "name")))
    if name == "collection_names":
        return cat.collection_names()
    if name == "insert_rows":
        cat.insert_rows(_arg(op, "name"), [row_from_json(r) for r in _arg(op, "rows")])
        return None
    if name == "iter_rows":
        return [row_to_json(r) for r in cat.iter_rows(_arg(op, "name"))]
    if name == "add_child":
        cat.add_collection_child(_arg(op, "parent"), _arg(op, "child"))
        return None
    if name == "register_container":
        cat.register_container_index(_arg(op, "guid"), _arg(op, "container"), _arg(op, "count"))
        return None
    if name == "container_index":
        return cat.container_index(_arg(op, "guid"))
    raise InvalidArgumentError(f"unknown operation: {name!r}")
