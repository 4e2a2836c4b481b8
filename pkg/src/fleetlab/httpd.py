"""HTTP frontend: JSON API, server-sent event stream, static portal files.

Runs the transport only; every request takes the platform lock and calls
the ApiRouter, so handlers stay single-writer with the clock driver.  The
stream endpoint pushes alert and lifecycle-transition events as SSE, which
is what the portal subscribes to.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from . import errors
from .api import ApiRouter
from .clock import WallDriver
from .orchestrator import Platform

_KEEPALIVE_S = 15.0


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "fleetlab"

    def log_message(self, fmt, *args):  # requests are the tests' business
        pass

    @property
    def app(self) -> "PlatformServer":
        return self.server.app  # type: ignore[attr-defined]

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers",
                         "Authorization, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

    def _token(self) -> Optional[str]:
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer "):]
        params = parse_qs(urlsplit(self.path).query)
        values = params.get("token")
        return values[0] if values else None

    # ------------------------------------------------------------- methods

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        path = urlsplit(self.path).path
        if path == "/api/v1/stream":
            self._stream()
        elif path.startswith("/api/v1"):
            self._api("GET")
        else:
            self._static(path)

    def do_POST(self) -> None:
        self._api("POST")

    def do_DELETE(self) -> None:
        self._api("DELETE")

    # ----------------------------------------------------------------- api

    def _api(self, method: str) -> None:
        body = None
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw) if raw else None
            except ValueError:
                self._send(400, json.dumps(
                    {"error": "bad_request", "message": "body is not JSON",
                     "details": {}}).encode("utf-8"), "application/json")
                return
        app = self.app
        with app.platform.lock:
            resp = app.router.handle(method, self.path, body=body,
                                     token=self._token())
        self._send(resp.status, resp.body, resp.content_type)

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -------------------------------------------------------------- static

    def _static(self, path: str) -> None:
        root = self.app.static_dir
        if root is None:
            self._send(404, b"not found", "text/plain")
            return
        if path.endswith("/"):
            path += "index.html"
        target = (root / path.lstrip("/")).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send(404, b"not found", "text/plain")
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), ctype)

    # -------------------------------------------------------------- stream

    def _stream(self) -> None:
        app = self.app
        try:
            with app.platform.lock:
                app.router._session_user(self._token())
        except errors.Unauthenticated as err:
            self._send(401, json.dumps(
                {"error": err.code, "message": err.message,
                 "details": {}}).encode("utf-8"), "application/json")
            return

        events: queue.Queue = queue.Queue()
        with app.platform.lock:
            app.platform.listeners.append(events.put)
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        self.close_connection = True
        try:
            self.wfile.write(b"retry: 1000\n\n")
            self.wfile.flush()
            while not app.stopping.is_set():
                try:
                    event = events.get(timeout=_KEEPALIVE_S)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                data = json.dumps(event["data"], sort_keys=True)
                self.wfile.write(
                    f"event: {event['event']}\ndata: {data}\n\n".encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            with app.platform.lock:
                try:
                    app.platform.listeners.remove(events.put)
                except ValueError:
                    pass


class PlatformServer:
    """Binds a Platform to a TCP port; optionally paces its virtual clock."""

    def __init__(self, platform: Platform, *, host: str = "127.0.0.1",
                 port: int = 0, static_dir: Optional[str | Path] = None,
                 clock_rate: Optional[float] = None):
        self.platform = platform
        self.router = ApiRouter(platform)
        self.static_dir = Path(static_dir) if static_dir is not None else None
        self.stopping = threading.Event()
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.app = self  # type: ignore[attr-defined]
        self.driver = (WallDriver(platform.sched, platform.lock, clock_rate)
                       if clock_rate is not None else None)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.httpd.server_address[:2]
        return str(host), int(port)

    def url(self, path: str = "") -> str:
        host, port = self.address
        return f"http://{host}:{port}{path}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        daemon=True)
        self._thread.start()
        if self.driver is not None:
            self.driver.start()

    def stop(self) -> None:
        self.stopping.set()
        if self.driver is not None:
            self.driver.stop()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_until_interrupt(self) -> None:
        self.start()
        try:
            while True:
                threading.Event().wait(3600)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()
