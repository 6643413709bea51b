"""Client for the catalog service.

Outside a transaction each call is one REST request and is atomic on the
server. Inside a transaction mutations are buffered and shipped as one
``/batch`` at commit. Every operation made while the buffer is non-empty is
checked by replaying the buffer server-side in a transaction that is then
rolled back, so errors surface at the call that caused them and reads see
the transaction's own writes.
"""

from __future__ import annotations

import http.client
import json
import socket
import threading
from typing import Any, Iterator, Mapping, Sequence
from urllib.parse import quote, urlencode, urlsplit

from . import query
from .catalog import CollectionDescription, CollectionRow, FileCatalog
from .errors import (
    CatalogPermissionError,
    InvalidArgumentError,
    InvalidStateError,
    ServerError,
    TransportError,
)
from .model import PFN, AttributeSchema, CatalogEntry, Value, generate_file_id
from .wire import (
    READ_OPS,
    collection_from_json,
    entry_from_json,
    error_from_json,
    pfn_from_json,
    row_from_json,
    row_to_json,
    schema_from_json,
    schema_to_json,
)

MODES = ("read", "update", "create")

_RETRYABLE = (http.client.RemoteDisconnected, ConnectionResetError, BrokenPipeError)


def _seg(text: str) -> str:
    return quote(text, safe="")


def rest_request(op: Mapping[str, Any]) -> tuple[str, str, dict[str, Any] | None]:
    """Translate a wire operation to ``(method, path, body)`` on the REST surface."""
    name = op["op"]
    g = _seg(op["guid"]) if "guid" in op and op["guid"] is not None else ""
    if name == "register_file":
        body = {"pfn": op["pfn"], "filetype": op.get("filetype")}
        if op.get("guid"):
            body["guid"] = op["guid"]
        return "POST", "/files", body
    if name == "create_entry":
        return "PUT", f"/files/{g}", {"pfn": op["pfn"], "filetype": op.get("filetype")}
    if name == "add_replica":
        return "POST", f"/files/{g}/replicas", {"pfn": op["pfn"], "filetype": op.get("filetype")}
    if name == "lookup_all_pfns":
        return "GET", f"/files/{g}/pfns", None
    if name == "lookup_file_id":
        return "GET", "/pfns?" + urlencode({"name": op["pfn"]}), None
    if name == "add_lfn":
        return "POST", f"/files/{g}/lfns", {"lfn": op["lfn"]}
    if name == "lookup_by_lfn":
        return "GET", "/lfns?" + urlencode({"name": op["lfn"]}), None
    if name == "lookup_lfns":
        return "GET", f"/files/{g}/lfns", None
    if name == "get_entry":
        return "GET", f"/files/{g}", None
    if name == "define_schema":
        return "PUT", "/schema", {"schema": op["schema"]}
    if name == "get_schema":
        return "GET", "/schema", None
    if name == "set_metadata":
        return "PUT", f"/files/{g}/meta/{_seg(op['attr'])}", {"value": op["value"]}
    if name == "get_metadata":
        return "GET", f"/files/{g}/meta", None
    if name == "delete_entry":
        return "DELETE", f"/files/{g}", None
    if name == "delete_pfn":
        return "DELETE", "/pfns?" + urlencode({"name": op["pfn"]}), None
    if name == "create_collection":
        return "POST", "/collections", {k: op.get(k) for k in ("name", "kind", "schema", "metadata")}
    if name == "describe_collection":
        return "GET", f"/collections/{_seg(op['name'])}", None
    if name == "collection_names":
        return "GET", "/collections", None
    if name == "insert_rows":
        return "POST", f"/collections/{_seg(op['name'])}/rows", {"rows": op["rows"]}
    if name == "add_child":
        return "POST", f"/collections/{_seg(op['parent'])}/children", {"child": op["child"]}
    if name == "register_container":
        return "PUT", f"/files/{g}/containers/{_seg(op['container'])}", {"count": op["count"]}
    if name == "container_index":
        return "GET", f"/files/{g}/containers", None
    raise InvalidArgumentError(f"operation {name!r} has no REST form")


class RemoteCatalog(FileCatalog):
    """A catalog served by :mod:`filecatalog.service` at ``url``."""

    scheme = "remote"
    native_autocommit = True

    def __init__(
        self,
        url: str,
        mode: str = "update",
        *,
        autocommit: bool = True,
        token: str | None = None,
        timeout: float = 30.0,
        page_size: int = 1000,
    ) -> None:
        if mode not in MODES:
            raise InvalidArgumentError(f"unknown open mode {mode!r}; expected one of {MODES}")
        parts = urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            raise InvalidArgumentError(f"remote catalog URL must look like http://host:port, got {url!r}")
        super().__init__(writable=mode != "read", autocommit=autocommit)
        self.url = url
        self.mode = mode
        self._host = parts.hostname
        self._port = parts.port or 80
        self._prefix = parts.path.rstrip("/")
        self._token = token
        self._timeout = timeout
        self.page_size = page_size
        self._local = threading.local()
        self._buffer: list[dict[str, Any]] = []
        self._request("GET", "/health", None)

    def __repr__(self) -> str:
        return f"RemoteCatalog({self.url!r}, mode={self.mode!r})"

    # ------------------------------------------------------------------
    # transport
    # ------------------------------------------------------------------

    def _connection(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)
            try:
                conn.connect()
                conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError:
                conn.close()
                raise
            self._local.conn = conn
        return conn

    def _drop_connection(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def _request(self, method: str, path: str, body: Any) -> Any:
        data = None if body is None else json.dumps(body).encode()
        headers = {"Accept": "application/json"}
        if data is not None:
            headers["Content-Type"] = "application/json"
        if self._token is not None:
            headers["Authorization"] = f"Bearer {self._token}"
        for attempt in (0, 1):
            reused = getattr(self._local, "conn", None) is not None
            try:
                conn = self._connection()
                conn.request(method, self._prefix + path, body=data, headers=headers)
                resp = conn.getresponse()
                raw = resp.read()
                break
            except _RETRYABLE as exc:
                # a kept-alive connection the server already closed; the
                # request never reached a handler, so one retry is safe
                self._drop_connection()
                if attempt or not reused:
                    raise TransportError(f"{self.url}: connection lost: {exc}") from None
            except (OSError, http.client.HTTPException) as exc:
                self._drop_connection()
                if isinstance(exc, socket.timeout):
                    raise TransportError(f"{self.url}: request timed out after {self._timeout}s") from None
                raise TransportError(f"{self.url}: {exc}") from None
        if resp.will_close:
            self._drop_connection()
        try:
            payload = json.loads(raw)
        except ValueError:
            raise ServerError(f"{self.url}: HTTP {resp.status} with a non-JSON body") from None
        if not isinstance(payload, dict):
            raise ServerError(f"{self.url}: malformed response")
        if payload.get("status") == "ok":
            return payload.get("result")
        raise error_from_json(payload)

    def _batch(self, ops: list[dict[str, Any]], *, commit: bool, continue_on_error: bool = False) -> list[Any]:
        out = self._request("POST", "/batch", {"ops": ops, "commit": commit, "continue_on_error": continue_on_error})
        return out["results"]

    def _call(self, op: dict[str, Any]) -> Any:
        """Run one operation, honouring the transaction buffer."""
        if self._in_tx:
            result = self._batch(self._buffer + [op], commit=False)[-1]["ok"]
            if op["op"] not in READ_OPS:
                self._buffer.append(op)
            return result
        if op["op"] in ("enumerate", "count", "iter_rows"):
            return self._batch([op], commit=False)[0]["ok"]
        return self._request(*rest_request(op))

    # ------------------------------------------------------------------
    # transactions
    # ------------------------------------------------------------------

    def _begin(self) -> None:
        self._buffer = []

    def _commit(self) -> None:
        ops, self._buffer = self._buffer, []
        if ops:
            self._batch(ops, commit=True)

    def _rollback(self) -> None:
        self._buffer = []

    def _close(self) -> None:
        self._drop_connection()

    # ------------------------------------------------------------------
    # primitives
    # ------------------------------------------------------------------

    def _register_file(self, pfn: PFN, proposal: str | None) -> tuple[str, bool]:
        op: dict[str, Any] = {"op": "register_file", "pfn": pfn.name, "filetype": pfn.filetype}
        if self._in_tx:
            # fix the FileID now so the buffered op commits to the same answer
            op["guid"] = proposal or generate_file_id()
            result = self._batch(self._buffer + [op], commit=False)[-1]["ok"]
            op["expect_guid"] = result["guid"]
            self._buffer.append(op)
            return result["guid"], result["created"]
        if proposal is not None:
            op["guid"] = proposal
        result = self._request(*rest_request(op))
        return result["guid"], result["created"]

    def _create_entry(self, guid: str, pfn: PFN) -> None:
        self._call({"op": "create_entry", "guid": guid, "pfn": pfn.name, "filetype": pfn.filetype})

    def _add_replica(self, guid: str, pfn: PFN) -> None:
        self._call({"op": "add_replica", "guid": guid, "pfn": pfn.name, "filetype": pfn.filetype})

    def _pfns(self, guid: str) -> list[PFN]:
        return [pfn_from_json(p) for p in self._call({"op": "lookup_all_pfns", "guid": guid})]

    def _pfn_owner(self, name: str) -> str:
        return self._call({"op": "lookup_file_id", "pfn": name})

    def _add_lfn(self, guid: str, lfn: str) -> None:
        self._call({"op": "add_lfn", "guid": guid, "lfn": lfn})

    def _lfn_owner(self, lfn: str) -> str:
        return self._call({"op": "lookup_by_lfn", "lfn": lfn})

    def _lfns(self, guid: str) -> list[str]:
        return self._call({"op": "lookup_lfns", "guid": guid})

    def _schema(self) -> AttributeSchema:
        return schema_from_json(self._call({"op": "get_schema"}))

    def _define_schema(self, schema: AttributeSchema) -> None:
        self._call({"op": "define_schema", "schema": schema_to_json(schema)})

    def _set_metadata(self, guid: str, attr: str, value: Value) -> None:
        self._call({"op": "set_metadata", "guid": guid, "attr": attr, "value": value})

    def _metadata(self, guid: str) -> dict[str, Value]:
        row = self._call({"op": "get_metadata", "guid": guid})
        return {k: v for k, v in row.items() if v is not None}

    def _entry(self, guid: str) -> CatalogEntry:
        return entry_from_json(self._call({"op": "get_entry", "guid": guid}))

    def _delete_entry(self, guid: str) -> None:
        self._call({"op": "delete_entry", "guid": guid})

    def _delete_pfn(self, name: str) -> None:
        self._call({"op": "delete_pfn", "pfn": name})

    def _entries(self, predicate: query.Predicate | None) -> Iterator[CatalogEntry]:
        text = None if predicate is None else query.to_text(predicate)
        if self._in_tx:
            return iter([entry_from_json(e) for e in self._call({"op": "enumerate", "query": text})])
        return self._pages(text)

    def _pages(self, text: str | None) -> Iterator[CatalogEntry]:
        after: str | None = None
        while True:
            params: dict[str, Any] = {"page_size": self.page_size}
            if text is not None:
                params["query"] = text
            if after is not None:
                params["after"] = after
            with self._lock:
                self._check_open()
                page = self._request("GET", "/files?" + urlencode(params), None)
            for e in page["entries"]:
                yield entry_from_json(e)
            after = page["next"]
            if after is None:
                return

    def count(self, predicate: query.Predicate | str | None = None) -> int:
        pred = query.prepare(predicate, self.query_view()) if predicate is not None else None
        text = None if pred is None else query.to_text(pred)
        with self._reading():
            return self._call({"op": "count", "query": text})

    # collections -------------------------------------------------------

    def _create_collection(self, desc: CollectionDescription) -> None:
        self._call(
            {
                "op": "create_collection",
                "name": desc.name,
                "kind": desc.kind,
                "schema": schema_to_json(desc.schema),
                "metadata": dict(desc.metadata),
            }
        )

    def _collection(self, name: str) -> CollectionDescription:
        return collection_from_json(self._call({"op": "describe_collection", "name": name}))

    def _collection_names(self) -> list[str]:
        return self._call({"op": "collection_names"})

    def _insert_rows(self, name: str, rows: Sequence[CollectionRow]) -> None:
        self._call({"op": "insert_rows", "name": name, "rows": [row_to_json(r) for r in rows]})

    def _rows(self, name: str) -> Iterator[CollectionRow]:
        if self._in_tx:
            return iter([row_from_json(r) for r in self._call({"op": "iter_rows", "name": name})])
        return self._row_pages(name)

    def _row_pages(self, name: str) -> Iterator[CollectionRow]:
        start = 0
        while True:
            params = urlencode({"start": start, "page_size": self.page_size})
            with self._lock:
                self._check_open()
                page = self._request("GET", f"/collections/{_seg(name)}/rows?{params}", None)
            for r in page["rows"]:
                yield row_from_json(r)
            if page["next"] is None:
                return
            start = page["next"]

    def _add_child(self, parent: str, child: str) -> None:
        self._call({"op": "add_child", "parent": parent, "child": child})

    def _register_container(self, guid: str, container: str, count: int) -> None:
        self._call({"op": "register_container", "guid": guid, "container": container, "count": count})

    def _containers(self, guid: str) -> dict[str, int]:
        return self._call({"op": "container_index", "guid": guid})

    # ------------------------------------------------------------------
    # batches: one round trip instead of one per operation
    # ------------------------------------------------------------------

    def apply_batch(self, ops: Sequence[Mapping[str, Any]]) -> list[Any]:
        ops = [dict(op) for op in ops]
        with self._lock:
            if self._in_tx:
                return super().apply_batch(ops)
            self._check_open()
            if not self.writable:
                raise CatalogPermissionError("catalog is opened read-only")
            if not self.autocommit:
                raise InvalidStateError("no active transaction (catalog opened in explicit mode)")
            if not ops:
                return []
            return [r["ok"] for r in self._batch(ops, commit=True)]

    def read_batch(self, ops: Sequence[Mapping[str, Any]]) -> list[Any]:
        ops = [dict(op) for op in ops]
        if not ops:
            return []
        with self._reading():
            prefix = self._buffer if self._in_tx else []
            results = self._batch(prefix + ops, commit=False, continue_on_error=True)[len(prefix):]
        return [error_from_json(r["error"]) if "error" in r else r["ok"] for r in results]
