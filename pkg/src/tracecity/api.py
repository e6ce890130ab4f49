"""HTTP surface: the OTLP write path and the read-only query endpoints.

Two listeners share one handler infrastructure: the ingest listener accepts
``POST /v1/traces`` in protobuf or JSON encoding, the api listener serves
``GET /api/landscape``, ``/api/layout`` and ``/api/status``. Query endpoints
take ``from``/``to`` unix-millisecond parameters and respond with permissive
cross-origin headers so a browser viewer can poll from anywhere.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from . import otlp
from .citylayout import layout, scene_to_doc
from .clustering import synthesize_landscape

_CT_JSON = "application/json"


class _ServiceHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, handler_cls, service):
        super().__init__(address, handler_cls)
        self.service = service


class _BaseHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "tracecity"

    @property
    def service(self):
        return self.server.service

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, code: int, doc) -> None:
        self._send(code, json.dumps(doc, separators=(",", ":")).encode("utf-8"), _CT_JSON)


class IngestHandler(_BaseHandler):
    """OTLP/HTTP trace receiver."""

    def do_POST(self):
        if urlsplit(self.path).path != "/v1/traces":
            self._send_json(404, {"error": "unknown path"})
            return
        content_type = (self.headers.get("Content-Type") or "").split(";")[0].strip()
        if content_type == otlp.CONTENT_TYPES[otlp.PROTOBUF]:
            encoding = otlp.PROTOBUF
        elif content_type == otlp.CONTENT_TYPES[otlp.JSON]:
            encoding = otlp.JSON
        else:
            self._send_json(415, {"error": f"unsupported content type {content_type!r}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length)
        try:
            summary = self.service.buffer.receive_export(body, encoding)
        except otlp.OtlpDecodeError as exc:
            self._send_json(400, {"code": 3, "message": str(exc)})
            return
        not_accepted = summary.rejected + summary.dropped
        message = "" if not_accepted == 0 else (
            f"{summary.rejected} spans rejected, {summary.dropped} spans dropped"
        )
        self._send(200, otlp.encode_export_response(not_accepted, message, encoding),
                   otlp.CONTENT_TYPES[encoding])


class ApiHandler(_BaseHandler):
    """Read-only landscape / layout / status endpoints."""

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parts = urlsplit(self.path)
        if parts.path == "/api/status":
            self._send_json(200, self.service.status_doc())
            return
        if parts.path in ("/api/landscape", "/api/layout"):
            query = parse_qs(parts.query)
            try:
                from_ms = int(query["from"][0])
                to_ms = int(query["to"][0])
            except (KeyError, IndexError, ValueError):
                self._send_json(400, {"error": "from and to must be integer milliseconds"})
                return
            if from_ms >= to_ms:
                self._send_json(400, {"error": "range must satisfy from < to"})
                return
            landscape = self.service.store.query(from_ms * 1_000_000, to_ms * 1_000_000)
            landscape = synthesize_landscape(
                landscape, self.service.config.clustering_jaccard_threshold
            )
            if parts.path == "/api/landscape":
                doc = landscape.to_doc()
                doc["query"] = {"from_ms": from_ms, "to_ms": to_ms}
                self._send_json(200, doc)
            else:
                self._send_json(200, scene_to_doc(layout(landscape)))
            return
        self._send_json(404, {"error": "unknown path"})


def make_ingest_server(service, port: int) -> _ServiceHTTPServer:
    return _ServiceHTTPServer(("127.0.0.1", port), IngestHandler, service)


def make_api_server(service, port: int) -> _ServiceHTTPServer:
    return _ServiceHTTPServer(("127.0.0.1", port), ApiHandler, service)
