"""Thread-per-request HTTP/1.1 adapter around :class:`BackendService`."""
from __future__ import annotations

import logging
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import BackendConfig, BackendService

log = logging.getLogger(__name__)

MAX_BODY = 64 * 1024 * 1024


def make_handler(service: BackendService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self, method: str) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self.send_error(413)
                return
            body = self.rfile.read(length) if length else b""
            resp = service.handle(method, self.path, dict(self.headers.items()), body)
            self.send_response(resp.status)
            for k, v in resp.headers:
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            self.wfile.write(resp.body)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


def make_server(config: BackendConfig, service: BackendService | None = None) -> ThreadingHTTPServer:
    """Bind a server; a service created here runs on the wall clock."""
    service = service or BackendService(config, clock=time.time)
    server = ThreadingHTTPServer((config.host, config.port), make_handler(service))
    server.daemon_threads = True
    server.service = service
    return server
