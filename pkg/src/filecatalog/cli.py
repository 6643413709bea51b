"""``filecatalog`` command-line tool: one subcommand per library operation.

Exit codes: 0 success, 1 not found, 2 invalid input, 3 I/O or transport
failure, 4 conflict or duplicate.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TextIO

from . import collection as coll
from .bench import BenchConfig, run_registration_bench
from .catalog import CollectionRow, FileCatalog
from .connect import SCHEMES, default_connection_string, open_catalog
from .crosscat import copy_entries, extract, migrate, publish
from .errors import CatalogError, InvalidArgumentError
from .model import Token, Value, decode_value
from .service import ServiceConfig, serve

EXIT_OK, EXIT_NOT_FOUND, EXIT_INVALID, EXIT_IO, EXIT_CONFLICT = 0, 1, 2, 3, 4


class Output:
    """Renders records as an aligned table, TSV or one JSON object per line."""

    def __init__(self, mode: str, quiet: bool, stream: TextIO) -> None:
        self.mode = mode
        self.quiet = quiet
        self.stream = stream

    def records(self, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
        n = 0
        if self.mode == "machine-readable":
            for row in rows:
                self.stream.write(json.dumps(dict(zip(columns, row)), sort_keys=False) + "\n")
                n += 1
            return n
        if self.mode == "tsv":
            for row in rows:
                self.stream.write("\t".join(_cell(v) for v in row) + "\n")
                n += 1
            return n
        table = [[_cell(v) for v in row] for row in rows]
        widths = [max([len(c)] + [len(r[i]) for r in table]) for i, c in enumerate(columns)]
        self.stream.write("  ".join(c.upper().ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
        for r in table:
            self.stream.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")
        return len(table)

    def value(self, column: str, value: Any) -> None:
        if self.mode == "table":
            self.stream.write(_cell(value) + "\n")
        else:
            self.records([column], [[value]])

    def note(self, message: str) -> None:
        if not self.quiet:
            print(message, file=sys.stderr)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_cell(v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _schema_arg(text: str) -> tuple[str, str]:
    name, sep, typ = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name:type, got {text!r}")
    return name, typ


def infer_value(text: str) -> Value:
    """Literal typing for untyped values: int, float, true/false, else string."""
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def _assignment(text: str) -> tuple[str, str]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    return name, value


def _as_connection_string(target: str) -> str:
    scheme = target.partition(":")[0]
    return target if scheme in SCHEMES else f"xmlcatalog_file:{target}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

Handler = Callable[[argparse.Namespace, Output], int]


def _open(args: argparse.Namespace, mode: str | None = None) -> FileCatalog:
    cs = args.catalog or default_connection_string()
    if not cs:
        raise InvalidArgumentError("no catalog given: pass --catalog or set FILECATALOG_CATALOG")
    return open_catalog(cs, mode)


def cmd_register_pfn(args, out: Output) -> int:
    with _open(args) as cat:
        guid, created = cat.register_file(args.pfn, args.filetype, file_id=args.guid)
    out.value("guid", guid)
    out.note("registered" if created else "already registered")
    return EXIT_OK


def cmd_lookup_pfn(args, out: Output) -> int:
    with _open(args, "read") as cat:
        pfns = cat.lookup_all_pfns(args.guid)
    if args.best:
        pfns = pfns[:1]
    out.records(["pfn", "filetype"], ([p.name, p.filetype] for p in pfns))
    return EXIT_OK


def cmd_lookup_fid(args, out: Output) -> int:
    with _open(args, "read") as cat:
        out.value("guid", cat.lookup_file_id(args.pfn))
    return EXIT_OK


def cmd_add_replica(args, out: Output) -> int:
    with _open(args) as cat:
        cat.add_replica(args.guid, args.pfn, args.filetype)
    out.note(f"added replica to {args.guid}")
    return EXIT_OK


def cmd_add_lfn(args, out: Output) -> int:
    with _open(args) as cat:
        cat.add_lfn(args.guid, args.lfn)
    out.note(f"added alias to {args.guid}")
    return EXIT_OK


def cmd_lookup_lfn(args, out: Output) -> int:
    with _open(args, "read") as cat:
        if args.fid:
            out.records(["lfn"], ([x] for x in cat.lookup_lfns(args.name)))
        else:
            out.value("guid", cat.lookup_by_lfn(args.name))
    return EXIT_OK


def cmd_delete_entry(args, out: Output) -> int:
    with _open(args) as cat:
        if len(args.guids) == 1:
            cat.delete_entry(args.guids[0])
        else:
            cat.apply_batch([{"op": "delete_entry", "guid": g} for g in args.guids])
    out.note(f"deleted {len(args.guids)} entr{'y' if len(args.guids) == 1 else 'ies'}")
    return EXIT_OK


def cmd_delete_pfn(args, out: Output) -> int:
    with _open(args) as cat:
        cat.delete_pfn(args.pfn)
    out.note("deleted replica")
    return EXIT_OK


def cmd_rename_pfn(args, out: Output) -> int:
    with _open(args) as cat:
        guid = cat.rename_pfn(args.old, args.new, args.filetype)
    out.value("guid", guid)
    return EXIT_OK


def cmd_define_schema(args, out: Output) -> int:
    with _open(args) as cat:
        cat.define_metadata_schema(args.attributes)
    out.note(f"schema has {len(args.attributes)} attribute(s)")
    return EXIT_OK


def cmd_set_meta(args, out: Output) -> int:
    with _open(args) as cat:
        types = cat.get_schema().types()
        if args.attr not in types:
            raise InvalidArgumentError(f"unknown attribute: {args.attr!r}")
        cat.set_metadata(args.guid, args.attr, decode_value(types[args.attr], args.value))
    return EXIT_OK


def cmd_get_meta(args, out: Output) -> int:
    with _open(args, "read") as cat:
        row = cat.get_metadata(args.guid)
    out.records(["attribute", "value"], row.items())
    return EXIT_OK


def cmd_list(args, out: Output) -> int:
    with _open(args, "read") as cat:
        entries = cat.enumerate(args.query)
        if args.count:
            out.value("count", sum(1 for _ in entries))
            return EXIT_OK
        if out.mode == "machine-readable":
            schema = cat.get_schema().names()
            for e in entries:
                rec = {"guid": e.file_id, "pfns": [[p.name, p.filetype] for p in e.pfns], "lfns": list(e.lfns)}
                rec["metadata"] = {k: e.metadata.get(k) for k in schema}
                out.stream.write(json.dumps(rec) + "\n")
            return EXIT_OK
        out.records(["guid", "pfn", "lfns"], ([e.file_id, e.master.name, list(e.lfns)] for e in entries))
    return EXIT_OK


def cmd_extract(args, out: Output) -> int:
    target = args.target
    with _open(args, "read") as cat:
        if target.partition(":")[0] in SCHEMES:
            with open_catalog(target) as dest:
                report = copy_entries(cat, dest, args.query)
            out.records(list(report.as_dict()), [list(report.as_dict().values())])
            return EXIT_OK
        if Path(target).exists() and not args.force:
            raise InvalidArgumentError(f"{target} exists; pass --force to overwrite")
        fragment = extract(cat, args.query)
    fragment.write(target)
    out.note(f"extracted {len(fragment)} entr{'y' if len(fragment) == 1 else 'ies'} to {target}")
    return EXIT_OK


def cmd_publish(args, out: Output) -> int:
    with open_catalog(_as_connection_string(args.source), "read") as src:
        fragment = extract(src, args.query)
    with _open(args) as dest:
        report = publish(fragment, dest, args.conflict_policy)
    out.records(list(report.as_dict()), [list(report.as_dict().values())])
    return EXIT_OK


def cmd_migrate(args, out: Output) -> int:
    report = migrate(args.source, args.dest, args.query, conflict_policy=args.conflict_policy)
    out.records(list(report.as_dict()), [list(report.as_dict().values())])
    return EXIT_OK


def cmd_coll_create(args, out: Output) -> int:
    metadata = {k: infer_value(v) for k, v in args.meta}
    kind = "hierarchical" if args.hierarchical else "explicit"
    with _open(args) as cat:
        cat.create_collection(args.name, args.attributes, kind=kind, metadata=metadata)
    out.note(f"created {kind} collection {args.name!r}")
    return EXIT_OK


def cmd_coll_insert(args, out: Output) -> int:
    with _open(args) as cat:
        types = cat.describe_collection(args.name).schema.types()
        values = {}
        for k, v in args.values:
            if k not in types:
                raise InvalidArgumentError(f"unknown attribute: {k!r}")
            values[k] = decode_value(types[k], v)
        cat.insert_rows(args.name, [CollectionRow(Token.parse(args.token), values)])
    return EXIT_OK


def cmd_coll_select(args, out: Output) -> int:
    with _open(args, "read") as cat:
        if args.coll_query is not None:
            if len(args.names) != 1:
                raise InvalidArgumentError("--coll-query takes exactly one hierarchical collection")
            rows = coll.select_hierarchical_with_source(cat, args.names[0], args.coll_query, args.query)
        else:
            rows = coll.select_with_source(cat, args.names, args.query)
        if args.fids:
            out.records(["guid"], ([g] for g in coll.distinct_file_ids(s.row for s in rows)))
            return EXIT_OK
        if out.mode == "machine-readable":
            for s in rows:
                rec = {"collection": s.collection, "token": str(s.row.token), "attributes": dict(s.row.attributes)}
                out.stream.write(json.dumps(rec) + "\n")
            return EXIT_OK
        out.records(
            ["collection", "token", "attributes"],
            (
                [s.collection, str(s.row.token), " ".join(f"{k}={_cell(v)}" for k, v in s.row.attributes.items())]
                for s in rows
            ),
        )
    return EXIT_OK


def cmd_coll_add_child(args, out: Output) -> int:
    with _open(args) as cat:
        cat.add_collection_child(args.parent, args.child)
    return EXIT_OK


def cmd_index_register(args, out: Output) -> int:
    with _open(args) as cat:
        cat.register_container_index(args.guid, args.container, args.count)
    return EXIT_OK


def cmd_serve(args, out: Output) -> int:
    config = ServiceConfig(
        args.store, args.host, args.port, args.token or os.environ.get("FILECATALOG_TOKEN"), args.max_request_size
    )
    running = serve(config)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    host, port = running.address
    out.stream.write(f"http://{host}:{port}\n")
    out.stream.flush()
    try:
        stop.wait()
    finally:
        running.stop()
    out.note("service stopped")
    return EXIT_OK


def cmd_bench(args, out: Output) -> int:
    cs = args.catalog or default_connection_string()
    if not cs:
        raise InvalidArgumentError("no catalog given: pass --catalog or set FILECATALOG_CATALOG")
    cfg = BenchConfig(cs, args.entries, args.commit_interval, args.clients, args.pfn_length, args.seed)
    report = run_registration_bench(cfg)
    d = report.as_dict()
    d.pop("config")
    d["errors"] = len(report.errors)
    out.records(list(d), [list(d.values())])
    for err in report.errors[:10]:
        print(f"bench: {err}", file=sys.stderr)
    return EXIT_OK if report.valid else EXIT_IO


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="filecatalog", description="Manage file catalogs and collections.")
    p.add_argument("--catalog", help="connection string (default: $FILECATALOG_CATALOG or $FILECATALOG_SERVICE_URL)")
    p.add_argument("--output", choices=("table", "tsv", "machine-readable"), default="table")
    p.add_argument("--quiet", action="store_true", help="suppress informational messages")
    p.add_argument("--verbose", action="store_true", help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name: str, handler: Handler, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(handler=handler)
        return sp

    sp = command("register-pfn", cmd_register_pfn, "register a PFN, printing its FileID")
    sp.add_argument("pfn")
    sp.add_argument("--filetype")
    sp.add_argument("--guid", help="FileID to use if the PFN is new")

    sp = command("lookup-pfn", cmd_lookup_pfn, "list the replicas of a FileID, master first")
    sp.add_argument("guid")
    sp.add_argument("--best", action="store_true", help="print the master replica only")

    sp = command("lookup-fid", cmd_lookup_fid, "print the FileID owning a PFN")
    sp.add_argument("pfn")

    sp = command("add-replica", cmd_add_replica, "add a replica to an existing FileID")
    sp.add_argument("guid")
    sp.add_argument("pfn")
    sp.add_argument("--filetype")

    sp = command("add-lfn", cmd_add_lfn, "add a logical alias to a FileID")
    sp.add_argument("guid")
    sp.add_argument("lfn")

    sp = command("lookup-lfn", cmd_lookup_lfn, "print the FileID of an alias (or the aliases of a FileID)")
    sp.add_argument("name")
    sp.add_argument("--fid", action="store_true", help="NAME is a FileID; list its aliases")

    sp = command("delete-entry", cmd_delete_entry, "delete entries with all their replicas")
    sp.add_argument("guids", nargs="+", metavar="guid")

    sp = command("delete-pfn", cmd_delete_pfn, "delete one replica")
    sp.add_argument("pfn")

    sp = command("rename-pfn", cmd_rename_pfn, "rename a replica under the same FileID")
    sp.add_argument("old")
    sp.add_argument("new")
    sp.add_argument("--filetype")

    sp = command("define-schema", cmd_define_schema, "define the metadata schema")
    sp.add_argument("attributes", nargs="*", type=_schema_arg, metavar="name:type")

    sp = command("set-meta", cmd_set_meta, "set one metadata value")
    sp.add_argument("guid")
    sp.add_argument("attr")
    sp.add_argument("value")

    sp = command("get-meta", cmd_get_meta, "print the metadata row of a FileID")
    sp.add_argument("guid")

    sp = command("list", cmd_list, "enumerate entries")
    sp.add_argument("--query")
    sp.add_argument("--count", action="store_true", help="print the number of matches only")

    sp = command("extract", cmd_extract, "extract a fragment to a file or another catalog")
    sp.add_argument("target", help="fragment file path, or a connection string")
    sp.add_argument("--query")
    sp.add_argument("--force", action="store_true", help="overwrite an existing fragment file")

    for name, handler, help in (
        ("publish", cmd_publish, "publish a fragment file or catalog into --catalog"),
        ("migrate", cmd_migrate, "copy entries between two catalogs"),
    ):
        sp = command(name, handler, help)
        sp.add_argument("source")
        if name == "migrate":
            sp.add_argument("dest")
        sp.add_argument("--query")
        sp.add_argument("--conflict-policy", choices=("skip", "error"), default="skip")

    sp = command("coll-create", cmd_coll_create, "create a collection")
    sp.add_argument("name")
    sp.add_argument("attributes", nargs="*", type=_schema_arg, metavar="name:type")
    sp.add_argument("--hierarchical", action="store_true")
    sp.add_argument("--meta", action="append", type=_assignment, default=[], metavar="name=value")

    sp = command("coll-insert", cmd_coll_insert, "append a row to an explicit collection")
    sp.add_argument("name")
    sp.add_argument("token", help="<guid>/<container>/<item>")
    sp.add_argument("values", nargs="*", type=_assignment, metavar="name=value")

    sp = command("coll-select", cmd_coll_select, "select rows from collections")
    sp.add_argument("names", nargs="+", metavar="name")
    sp.add_argument("--query", help="object-level predicate")
    sp.add_argument("--coll-query", help="collection-level predicate (one hierarchical collection)")
    sp.add_argument("--fids", action="store_true", help="print the distinct FileIDs only")

    sp = command("coll-add-child", cmd_coll_add_child, "add a child to a hierarchical collection")
    sp.add_argument("parent")
    sp.add_argument("child")

    sp = command("index-register", cmd_index_register, "record the object count of a container")
    sp.add_argument("guid")
    sp.add_argument("container")
    sp.add_argument("count", type=int)

    sp = command("serve", cmd_serve, "run the catalog service")
    sp.add_argument("--store", required=True, help="embedded store path")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    sp.add_argument("--token", help="require this bearer token (default: $FILECATALOG_TOKEN)")
    sp.add_argument("--max-request-size", type=int, default=64 * 1024 * 1024)

    sp = command("bench", cmd_bench, "registration throughput benchmark against --catalog")
    sp.add_argument("--entries", type=int, default=10_000)
    sp.add_argument("--commit-interval", type=int, default=100)
    sp.add_argument("--clients", type=int, default=1)
    sp.add_argument("--pfn-length", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    out = Output(args.output, args.quiet, stdout or sys.stdout)
    try:
        return args.handler(args, out)
    except CatalogError as exc:
        print(f"filecatalog: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        return EXIT_IO
    except OSError as exc:
        print(f"filecatalog: {exc}", file=sys.stderr)
        return EXIT_IO


def main_entry() -> None:
    sys.exit(main())
