"""HTTP service that exposes one access level of a local linear model.

Endpoints:
    GET  /v1/info     -> {"access_level", "num_classes", "dim", "max_batch"}
    POST /v1/predict  <- {"inputs": [[...], ...], "level": "<level>"}
                      -> {"outputs": [[...], ...]}

Floats are written with ``repr`` precision, so clients decode exactly the
values the server computed.
"""

from __future__ import annotations

import json
import logging
import signal
import threading
import time
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .backend import DEFAULT_MAX_BATCH, LinearSoftmaxModel, LocalBackend
from .core import AccessLevel
from .errors import ServerError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServerConfig:
    model_path: str
    access_level: AccessLevel = AccessLevel.LOGITS
    host: str = "127.0.0.1"
    port: int = 8000
    max_batch: int = DEFAULT_MAX_BATCH
    latency: float = 0.0  # seconds added before each predict response

    def __post_init__(self):
        object.__setattr__(self, "access_level", AccessLevel.parse(self.access_level))
        if self.max_batch < 1:
            raise ServerError("max batch must be positive")
        if self.latency < 0:
            raise ServerError("latency must be non-negative")


class _HTTPError(Exception):
    def __init__(self, status: HTTPStatus, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class PredictService:
    """Request handling logic, independent of the HTTP transport."""

    def __init__(self, model: LinearSoftmaxModel, level: AccessLevel, max_batch: int = DEFAULT_MAX_BATCH):
        self.level = AccessLevel.parse(level)
        self.backend = LocalBackend(model, levels=[self.level])
        self.max_batch = max_batch

    def info(self) -> dict:
        return {
            "access_level": self.level.value,
            "num_classes": self.backend.num_classes,
            "dim": self.backend.dim,
            "max_batch": self.max_batch,
        }

    def predict(self, body: bytes) -> dict:
        try:
            req = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise _HTTPError(HTTPStatus.BAD_REQUEST, f"malformed JSON: {exc}") from None
        if not isinstance(req, dict) or "inputs" not in req or "level" not in req:
            raise _HTTPError(HTTPStatus.BAD_REQUEST, 'body must be {"inputs": [...], "level": "..."}')
        if req["level"] != self.level.value:
            raise _HTTPError(HTTPStatus.FORBIDDEN, "access level denied")
        inputs = req["inputs"]
        if not isinstance(inputs, list):
            raise _HTTPError(HTTPStatus.BAD_REQUEST, "inputs must be a list of vectors")
        if len(inputs) > self.max_batch:
            raise _HTTPError(HTTPStatus.REQUEST_ENTITY_TOO_LARGE,
                             f"batch of {len(inputs)} exceeds max batch {self.max_batch}")
        if not inputs:
            return {"outputs": []}
        d = self.backend.dim
        if any(not isinstance(row, list) for row in inputs):
            raise _HTTPError(HTTPStatus.BAD_REQUEST, "inputs must be a list of vectors")
        if any(len(row) != d for row in inputs):
            raise _HTTPError(HTTPStatus.UNPROCESSABLE_ENTITY, f"every input must have dimension {d}")
        try:
            X = np.array(inputs, dtype=np.float64)
        except (TypeError, ValueError):
            raise _HTTPError(HTTPStatus.BAD_REQUEST, "inputs must be numeric") from None
        if not np.all(np.isfinite(X)):
            raise _HTTPError(HTTPStatus.UNPROCESSABLE_ENTITY, "inputs must be finite")
        return {"outputs": self.backend.predict_array(X, self.level).tolist()}


def _handler(service: PredictService, latency: float):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # headers and body go out in separate writes; without this, keep-alive
        # clients wait on delayed ACKs
        disable_nagle_algorithm = True

        def _send(self, status: HTTPStatus, payload: dict) -> None:
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path != "/v1/info":
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
                return
            self._send(HTTPStatus.OK, service.info())

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length)
            if self.path != "/v1/predict":
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
                return
            if latency:
                time.sleep(latency)
            try:
                self._send(HTTPStatus.OK, service.predict(body))
            except _HTTPError as exc:
                self._send(exc.status, {"error": exc.message})

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


class ModelServer:
    """A running server; use as a context manager or call ``shutdown``."""

    def __init__(self, cfg: ServerConfig, model: LinearSoftmaxModel | None = None):
        model = model if model is not None else LinearSoftmaxModel.load(cfg.model_path)
        self.cfg = cfg
        self.service = PredictService(model, cfg.access_level, cfg.max_batch)
        try:
            self.httpd = ThreadingHTTPServer((cfg.host, cfg.port), _handler(self.service, cfg.latency))
        except OSError as exc:
            raise ServerError(f"cannot bind {cfg.host}:{cfg.port}: {exc}") from None
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ModelServer":
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve(cfg: ServerConfig, model: LinearSoftmaxModel | None = None) -> ModelServer:
    """Start serving in a background thread and return the running server."""
    return ModelServer(cfg, model).start()


def serve_forever(cfg: ServerConfig, ready=None) -> None:
    """Serve in the foreground until SIGINT or SIGTERM."""
    server = ModelServer(cfg)
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    old = {s: signal.signal(s, on_signal) for s in (signal.SIGINT, signal.SIGTERM)}
    server.start()
    log.info("serving %s at %s", cfg.access_level.value, server.url)
    if ready is not None:
        ready(server)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        server.shutdown()
        for s, handler in old.items():
            signal.signal(s, handler)


__all__ = ["ModelServer", "PredictService", "ServerConfig", "serve", "serve_forever"]
