"""Moving catalog fragments between catalogs of any backend.

A fragment is a schema plus complete entries. Publishing keeps FileIDs:
unknown entries are inserted as they are, known ones gain the replicas and
aliases they lack, and metadata disagreements follow the conflict policy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable

from . import query
from .catalog import FileCatalog
from .connect import open_catalog
from .errors import CatalogError, ConflictError, InvalidArgumentError, NotFoundError
from .model import AttributeSchema, CatalogEntry, Value, check_row
from .wire import entry_from_json, schema_to_json
from .xmlcatalog import atomic_write, catalog_xml_string, parse_catalog_xml, write_catalog_xml

POLICIES = ("skip", "error")


@dataclass(frozen=True)
class CatalogFragment:
    schema: AttributeSchema
    entries: tuple[CatalogEntry, ...] = ()

    def __post_init__(self) -> None:
        guids: set[str] = set()
        pfns: dict[str, str] = {}
        lfns: dict[str, str] = {}
        for e in self.entries:
            if e.file_id in guids:
                raise InvalidArgumentError(f"fragment lists file id {e.file_id} twice")
            guids.add(e.file_id)
            if not e.pfns:
                raise InvalidArgumentError(f"fragment entry {e.file_id} has no replicas")
            for p in e.pfns:
                if pfns.setdefault(p.name, e.file_id) != e.file_id:
                    raise InvalidArgumentError(f"PFN {p.name!r} appears under two file ids in the fragment")
            for lfn in e.lfns:
                if lfns.setdefault(lfn, e.file_id) != e.file_id:
                    raise InvalidArgumentError(f"LFN {lfn!r} appears under two file ids in the fragment")
            if len(set(e.pfn_names())) != len(e.pfns) or len(set(e.lfns)) != len(e.lfns):
                raise InvalidArgumentError(f"fragment entry {e.file_id} repeats a replica or alias")
            check_row(self.schema, e.metadata)

    def __len__(self) -> int:
        return len(self.entries)

    def to_xml(self) -> str:
        return catalog_xml_string(self.schema, self.entries)

    def write(self, target: str | Path | IO[str]) -> None:
        if isinstance(target, (str, Path)):
            atomic_write(Path(target), lambda fh: write_catalog_xml(fh, self.schema, self.entries))
        else:
            write_catalog_xml(target, self.schema, self.entries)

    @classmethod
    def read(cls, source: str | Path | IO[bytes]) -> CatalogFragment:
        schema, entries = parse_catalog_xml(source)
        return cls(schema, tuple(entries))


@dataclass(frozen=True)
class MetadataConflict:
    file_id: str
    attribute: str
    dest_value: Value
    fragment_value: Value


@dataclass
class PublishReport:
    inserted: int = 0
    merged: int = 0
    #: entries already present in full; nothing was written for them
    skipped: int = 0
    metadata_conflicts: list[MetadataConflict] = field(default_factory=list)
    schema_adopted: bool = False

    def __iadd__(self, other: PublishReport) -> PublishReport:
        self.inserted += other.inserted
        self.merged += other.merged
        self.skipped += other.skipped
        self.metadata_conflicts.extend(other.metadata_conflicts)
        self.schema_adopted = self.schema_adopted or other.schema_adopted
        return self

    def as_dict(self) -> dict[str, Any]:
        return {
            "inserted": self.inserted,
            "merged": self.merged,
            "skipped": self.skipped,
            "metadata_conflicts": len(self.metadata_conflicts),
            "schema_adopted": self.schema_adopted,
        }


def extract(source: FileCatalog, predicate: query.Predicate | str | None = None) -> CatalogFragment:
    """Copy the matching entries, with replicas, aliases and metadata, out of ``source``."""
    schema = source.get_schema()
    return CatalogFragment(schema, tuple(source.enumerate(predicate)))


def _check_schema(fragment: AttributeSchema, dest: AttributeSchema) -> bool:
    """True if dest must adopt the fragment schema; raise if incompatible."""
    if not len(dest):
        return len(fragment) > 0
    dest_types = dest.types()
    for name, t in fragment.pairs():
        if name not in dest_types:
            raise ConflictError(f"destination schema lacks attribute {name!r}")
        if dest_types[name] != t:
            raise ConflictError(f"attribute {name!r} is {t} in the fragment but {dest_types[name]} in the destination")
    return False


def _identity_error(kind: str, name: str, fragment_guid: str, dest_guid: str) -> ConflictError:
    return ConflictError(
        f"{kind} {name!r} belongs to {fragment_guid} in the fragment but to {dest_guid} in the destination"
    )


def plan_publish(
    fragment: CatalogFragment, dest: FileCatalog, conflict_policy: str = "skip"
) -> tuple[list[dict[str, Any]], PublishReport]:
    """Compute the batch that publishes ``fragment`` into ``dest`` (read-only)."""
    if conflict_policy not in POLICIES:
        raise InvalidArgumentError(f"conflict policy must be one of {POLICIES}")
    report = PublishReport()
    ops: list[dict[str, Any]] = []
    if _check_schema(fragment.schema, dest.get_schema()):
        ops.append({"op": "define_schema", "schema": schema_to_json(fragment.schema)})
        report.schema_adopted = True

    reads: list[dict[str, Any]] = []
    for e in fragment.entries:
        reads.append({"op": "get_entry", "guid": e.file_id})
        reads.extend({"op": "lookup_file_id", "pfn": p.name} for p in e.pfns)
        reads.extend({"op": "lookup_by_lfn", "lfn": lfn} for lfn in e.lfns)
    answers = iter(dest.read_batch(reads))

    def owner(answer: Any) -> str | None:
        if isinstance(answer, NotFoundError):
            return None
        if isinstance(answer, CatalogError):
            raise answer
        return answer

    for e in fragment.entries:
        current = next(answers)
        pfn_owners = [owner(next(answers)) for _ in e.pfns]
        lfn_owners = [owner(next(answers)) for _ in e.lfns]
        for p, o in zip(e.pfns, pfn_owners):
            if o is not None and o != e.file_id:
                raise _identity_error("PFN", p.name, e.file_id, o)
        for lfn, o in zip(e.lfns, lfn_owners):
            if o is not None and o != e.file_id:
                raise _identity_error("LFN", lfn, e.file_id, o)

        if isinstance(current, NotFoundError):
            first, *rest = e.pfns
            ops.append({"op": "create_entry", "guid": e.file_id, "pfn": first.name, "filetype": first.filetype})
            ops.extend({"op": "add_replica", "guid": e.file_id, "pfn": p.name, "filetype": p.filetype} for p in rest)
            ops.extend({"op": "add_lfn", "guid": e.file_id, "lfn": lfn} for lfn in e.lfns)
            ops.extend(
                {"op": "set_metadata", "guid": e.file_id, "attr": k, "value": v}
                for k, v in e.metadata.items()
                if v is not None
            )
            report.inserted += 1
            continue
        if isinstance(current, CatalogError):
            raise current
        have = entry_from_json(current)
        before = len(ops)
        ops.extend(
            {"op": "add_replica", "guid": e.file_id, "pfn": p.name, "filetype": p.filetype}
            for p, o in zip(e.pfns, pfn_owners)
            if o is None
        )
        ops.extend({"op": "add_lfn", "guid": e.file_id, "lfn": lfn} for lfn, o in zip(e.lfns, lfn_owners) if o is None)
        for attr, value in e.metadata.items():
            if value is None:
                continue
            old = have.metadata.get(attr)
            if old is None:
                ops.append({"op": "set_metadata", "guid": e.file_id, "attr": attr, "value": value})
            elif old != value:
                if conflict_policy == "error":
                    raise ConflictError(
                        f"metadata {attr!r} of {e.file_id} is {old!r} in the destination, {value!r} in the fragment"
                    )
                report.metadata_conflicts.append(MetadataConflict(e.file_id, attr, old, value))
        if len(ops) > before:
            report.merged += 1
        else:
            report.skipped += 1
    return ops, report


def publish(fragment: CatalogFragment, dest: FileCatalog, conflict_policy: str = "skip") -> PublishReport:
    """Merge ``fragment`` into ``dest`` in one atomic batch."""
    ops, report = plan_publish(fragment, dest, conflict_policy)
    if ops:
        dest.apply_batch(ops)
    return report


def _chunks(entries: Iterable[CatalogEntry], size: int) -> Iterable[tuple[CatalogEntry, ...]]:
    it = iter(entries)
    while chunk := tuple(itertools.islice(it, size)):
        yield chunk


def copy_entries(
    source: FileCatalog,
    dest: FileCatalog,
    predicate: query.Predicate | str | None = None,
    *,
    conflict_policy: str = "skip",
    page_size: int = 1000,
) -> PublishReport:
    """Stream ``source`` into ``dest`` page by page; each page is one publish."""
    schema = source.get_schema()
    report = publish(CatalogFragment(schema), dest, conflict_policy)
    for chunk in _chunks(source.enumerate(predicate), page_size):
        report += publish(CatalogFragment(schema, chunk), dest, conflict_policy)
    return report


def migrate(
    source_cs: str,
    dest_cs: str,
    predicate: query.Predicate | str | None = None,
    *,
    conflict_policy: str = "skip",
    page_size: int = 1000,
) -> PublishReport:
    """Extract from one connection string and publish into another, streaming."""
    with open_catalog(source_cs, "read") as source, open_catalog(dest_cs) as dest:
        return copy_entries(source, dest, predicate, conflict_policy=conflict_policy, page_size=page_size)
