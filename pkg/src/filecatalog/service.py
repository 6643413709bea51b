"""Reference catalog service: JSON over HTTP, persisted in an embedded store.

All mutations and batches serialize through one writer handle; plain reads
are served from a pool of read-only handles and see the last committed state.
"""

from __future__ import annotations

import base64
import json
import logging
import queue
import socket
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Iterator
from urllib.parse import parse_qs, unquote, urlsplit

from . import query
from .embedded import PAGE_SIZE, EmbeddedCatalog
from .errors import CatalogError, CatalogPermissionError, InvalidArgumentError, NotFoundError, ServerError
from .model import is_file_id
from .wire import READ_OPS, entry_to_json, error_to_json, execute

log = logging.getLogger(__name__)

MAX_PAGE_SIZE = 10_000


@dataclass
class ServiceConfig:
    store_path: str
    host: str = "127.0.0.1"
    port: int = 0
    token: str | None = None
    max_request_size: int = 64 * 1024 * 1024


class CatalogService:
    """Owns the store handles and dispatches decoded requests."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        try:
            self.writer = EmbeddedCatalog(config.store_path, "update")
        except NotFoundError:
            self.writer = EmbeddedCatalog(config.store_path, "create")
        self.write_lock = threading.Lock()
        self._readers: queue.LifoQueue[EmbeddedCatalog] = queue.LifoQueue()
        self._all_readers: list[EmbeddedCatalog] = []
        self._readers_lock = threading.Lock()

    @contextmanager
    def reader(self) -> Iterator[EmbeddedCatalog]:
        try:
            handle = self._readers.get_nowait()
        except queue.Empty:
            handle = EmbeddedCatalog(self.config.store_path, "read")
            with self._readers_lock:
                self._all_readers.append(handle)
        try:
            yield handle
        finally:
            self._readers.put(handle)

    def close(self) -> None:
        with self._readers_lock:
            for h in self._all_readers:
                h.close()
        self.writer.close()

    # ------------------------------------------------------------------

    def run(self, op: dict[str, Any]) -> Any:
        if op.get("op") in READ_OPS:
            with self.reader() as cat:
                return execute(cat, op)
        with self.write_lock:
            return execute(self.writer, op)

    def batch(self, ops: list[dict[str, Any]], commit: bool, continue_on_error: bool) -> dict[str, Any]:
        if not isinstance(ops, list):
            raise InvalidArgumentError("batch body needs an 'ops' list")
        if all(o.get("op") in READ_OPS for o in ops):
            with self.reader() as cat:
                return {"results": self._run_ops(cat, ops, continue_on_error)}
        with self.write_lock:
            cat = self.writer
            cat.start_transaction()
            try:
                results = self._run_ops(cat, ops, continue_on_error)
            except BaseException:
                cat.rollback()
                raise
            if commit:
                cat.commit()
            else:
                cat.rollback()
            return {"results": results}

    @staticmethod
    def _run_ops(cat, ops, continue_on_error: bool) -> list[Any]:
        results = []
        for index, op in enumerate(ops):
            try:
                results.append({"ok": execute(cat, op)})
            except CatalogError as exc:
                if not continue_on_error:
                    exc.batch_index = index
                    raise
                results.append({"error": error_to_json(exc)})
        return results

    def list_page(self, text: str | None, after_token: str | None, page_size: int) -> dict[str, Any]:
        after = ""
        if after_token:
            try:
                after = base64.b64decode(after_token.encode(), altchars=b"-_", validate=True).decode()
            except (ValueError, UnicodeDecodeError):
                after = ""
            if not is_file_id(after):
                raise InvalidArgumentError("malformed continuation token")
        with self.reader() as cat:
            pred = query.prepare(text, cat.query_view()) if text else None
            page = next(cat.iter_pages(pred, after=after, page_size=page_size), [])
        token = None
        if len(page) == page_size:
            token = base64.urlsafe_b64encode(page[-1].file_id.encode()).decode()
        return {"entries": [entry_to_json(e) for e in page], "next": token}

    def rows_page(self, name: str, start: int, page_size: int) -> dict[str, Any]:
        with self.reader() as cat:
            rows = []
            it = cat.iter_rows(name)
            for i, row in enumerate(it):
                if i < start:
                    continue
                if len(rows) == page_size:
                    break
                rows.append({"token": str(row.token), "attributes": dict(row.attributes)})
        nxt = start + len(rows) if len(rows) == page_size else None
        return {"rows": rows, "next": nxt}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def _route(method: str, parts: list[str], params: dict[str, str], body: dict[str, Any]) -> dict[str, Any] | str:
    """Map a REST request onto a wire operation (or a special handler name)."""
    n = len(parts)
    head = parts[0] if parts else ""
    if head == "health" and n == 1 and method == "GET":
        return "health"
    if head == "batch" and n == 1 and method == "POST":
        return "batch"
    if head == "schema" and n == 1:
        if method == "GET":
            return {"op": "get_schema"}
        if method == "PUT":
            return {"op": "define_schema", "schema": body.get("schema")}
    if head == "pfns" and n == 1:
        if method == "GET":
            return {"op": "lookup_file_id", "pfn": params.get("name")}
        if method == "DELETE":
            return {"op": "delete_pfn", "pfn": params.get("name")}
    if head == "lfns" and n == 1 and method == "GET":
        return {"op": "lookup_by_lfn", "lfn": params.get("name")}
    if head == "files":
        if n == 1:
            if method == "POST":
                return {"op": "register_file", **{k: body.get(k) for k in ("pfn", "filetype", "guid")}}
            if method == "GET":
                return "list"
        guid = parts[1] if n > 1 else None
        if n == 2:
            if method == "GET":
                return {"op": "get_entry", "guid": guid}
            if method == "PUT":
                return {"op": "create_entry", "guid": guid, "pfn": body.get("pfn"), "filetype": body.get("filetype")}
            if method == "DELETE":
                return {"op": "delete_entry", "guid": guid}
        if n == 3:
            sub = parts[2]
            if sub == "pfns" and method == "GET":
                return {"op": "lookup_all_pfns", "guid": guid}
            if sub == "replicas" and method == "POST":
                return {"op": "add_replica", "guid": guid, "pfn": body.get("pfn"), "filetype": body.get("filetype")}
            if sub == "lfns" and method == "POST":
                return {"op": "add_lfn", "guid": guid, "lfn": body.get("lfn")}
            if sub == "lfns" and method == "GET":
                return {"op": "lookup_lfns", "guid": guid}
            if sub == "meta" and method == "GET":
                return {"op": "get_metadata", "guid": guid}
            if sub == "containers" and method == "GET":
                return {"op": "container_index", "guid": guid}
        if n == 4:
            if parts[2] == "meta" and method == "PUT":
                return {"op": "set_metadata", "guid": guid, "attr": parts[3], "value": body.get("value")}
            if parts[2] == "containers" and method == "PUT":
                return {"op": "register_container", "guid": guid, "container": parts[3], "count": body.get("count")}
    if head == "collections":
        if n == 1:
            if method == "GET":
                return {"op": "collection_names"}
            if method == "POST":
                return {"op": "create_collection", **{k: body.get(k) for k in ("name", "kind", "schema", "metadata")}}
        if n == 2 and method == "GET":
            return {"op": "describe_collection", "name": parts[1]}
        if n == 3 and parts[2] == "rows":
            if method == "POST":
                return {"op": "insert_rows", "name": parts[1], "rows": body.get("rows")}
            if method == "GET":
                return "rows"
        if n == 3 and parts[2] == "children" and method == "POST":
            return {"op": "add_child", "parent": parts[1], "child": body.get("child")}
    raise _NoRoute()


class _NoRoute(Exception):
    pass


def _int_param(params: dict[str, str], key: str, default: int, lo: int, hi: int) -> int:
    raw = params.get(key)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{key} must be an integer") from None
    if not lo <= value <= hi:
        raise InvalidArgumentError(f"{key} must be between {lo} and {hi}")
    return value


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # headers and body go out as separate writes; Nagle would hold the body
    disable_nagle_algorithm = True
    server: _Server

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s - %s", self.address_string(), fmt % args)

    def setup(self) -> None:
        super().setup()
        self.server.track(self.connection, True)

    def finish(self) -> None:
        try:
            super().finish()
        finally:
            self.server.track(self.connection, False)

    def _send(self, status: int, payload: dict[str, Any]) -> None:
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, exc: CatalogError) -> None:
        payload = error_to_json(exc)
        index = getattr(exc, "batch_index", None)
        if index is not None:
            payload["index"] = index
        self._send(exc.http_status, payload)

    def _handle(self, method: str) -> None:
        with self.server.in_flight():
            try:
                self._dispatch(method)
            except CatalogError as exc:
                self._error(exc)
            except _NoRoute:
                self._send(HTTPStatus.NOT_FOUND, {"status": "invalid", "message": f"no route for {method} {self.path}"})
            except Exception as exc:  # noqa: BLE001 - report, keep serving
                log.exception("request failed")
                self._error(ServerError(f"internal error: {exc}"))

    def _dispatch(self, method: str) -> None:
        svc = self.server.service
        cfg = svc.config
        split = urlsplit(self.path)
        parts = [unquote(p) for p in split.path.split("/") if p]
        params = {k: v[-1] for k, v in parse_qs(split.query, keep_blank_values=True).items()}

        length = int(self.headers.get("Content-Length") or 0)
        if length > cfg.max_request_size:
            self.close_connection = True
            raise InvalidArgumentError(f"request body of {length} bytes exceeds the limit of {cfg.max_request_size}")
        body: dict[str, Any] = {}
        if length:
            try:
                body = json.loads(self.rfile.read(length))
            except ValueError:
                raise InvalidArgumentError("request body is not valid JSON") from None
            if not isinstance(body, dict):
                raise InvalidArgumentError("request body must be a JSON object")

        if cfg.token is not None and parts != ["health"]:
            if self.headers.get("Authorization") != f"Bearer {cfg.token}":
                raise CatalogPermissionError("missing or invalid bearer token")

        target = _route(method, parts, params, body)
        if target == "health":
            result: Any = {"service": "filecatalog"}
        elif target == "batch":
            result = svc.batch(body.get("ops"), bool(body.get("commit")), bool(body.get("continue_on_error")))
        elif target == "list":
            size = _int_param(params, "page_size", PAGE_SIZE, 1, MAX_PAGE_SIZE)
            result = svc.list_page(params.get("query"), params.get("after"), size)
        elif target == "rows":
            size = _int_param(params, "page_size", PAGE_SIZE, 1, MAX_PAGE_SIZE)
            start = _int_param(params, "start", 0, 0, 2**62)
            result = svc.rows_page(parts[1], start, size)
        else:
            result = svc.run(target)
        self._send(HTTPStatus.OK, {"status": "ok", "result": result})

    def do_GET(self) -> None:
        self._handle("GET")

    def do_POST(self) -> None:
        self._handle("POST")

    def do_PUT(self) -> None:
        self._handle("PUT")

    def do_DELETE(self) -> None:
        self._handle("DELETE")

    def do_PATCH(self) -> None:
        self._handle("PATCH")


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], service: CatalogService) -> None:
        super().__init__(addr, _Handler)
        self.service = service
        self._conns: set[socket.socket] = set()
        self._busy = 0
        self._cond = threading.Condition()

    def track(self, conn: socket.socket, alive: bool) -> None:
        with self._cond:
            if alive:
                self._conns.add(conn)
            else:
                self._conns.discard(conn)
            self._cond.notify_all()

    @contextmanager
    def in_flight(self) -> Iterator[None]:
        with self._cond:
            self._busy += 1
        try:
            yield
        finally:
            with self._cond:
                self._busy -= 1
                self._cond.notify_all()

    def drain(self, timeout: float) -> None:
        """Wait for in-flight requests, then close idle keep-alive connections."""
        with self._cond:
            self._cond.wait_for(lambda: self._busy == 0, timeout)
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        with self._cond:
            self._cond.wait_for(lambda: not self._conns, timeout)


class RunningService:
    """A live service bound to a socket, serving from a background thread."""

    def __init__(self, config: ServiceConfig) -> None:
        self.service = CatalogService(config)
        try:
            self._server = _Server((config.host, config.port), self.service)
        except OSError:
            self.service.close()
            raise
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, name="catalog-service", daemon=True
        )
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def stop(self, timeout: float = 10.0) -> None:
        self._server.shutdown()
        self._server.drain(timeout)
        self._server.server_close()
        self._thread.join(timeout)
        self.service.close()

    def __enter__(self) -> RunningService:
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()


def serve(config: ServiceConfig) -> RunningService:
    """Start the service; returns once the socket is bound."""
    return RunningService(config)
