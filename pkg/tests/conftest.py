"""Shared fixtures: image factories, scripted HTTP backend stub, app factory."""

from __future__ import annotations

import io
import json
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from PIL import Image

from chart_refinery.config import AppConfig
from chart_refinery.models import ChartImage


def make_png(width: int = 64, height: int = 48, color=(250, 250, 250), seed: int | None = None) -> bytes:
    if seed is not None:
        import numpy as np

        rng = np.random.default_rng(seed)
        arr = rng.integers(0, 255, (height, width, 3), dtype=np.uint8)
        img = Image.fromarray(arr)
    else:
        img = Image.new("RGB", (width, height), color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def make_jpeg(width: int = 64, height: int = 48, color=(200, 220, 240)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="JPEG")
    return buf.getvalue()


@pytest.fixture
def png_bytes() -> bytes:
    return make_png()


@pytest.fixture
def chart_image(png_bytes) -> ChartImage:
    return ChartImage.from_bytes(png_bytes)


@pytest.fixture
def app_config(tmp_path) -> AppConfig:
    cfg = AppConfig()
    cfg.store_root = str(tmp_path / "data")
    cfg.sandbox.timeout_s = 60  # generous for CI boxes; specific tests override
    cfg.sandbox.workdir_root = str(tmp_path / "sandbox")
    (tmp_path / "sandbox").mkdir()
    return cfg


class StubBackend:
    """Scripted local HTTP backend for wire-format and retry tests.

    Responses are popped from ``script`` (a list of (status, body) pairs, a
    "timeout" marker, or a callable(path, body) -> (status, body)); when the
    script is exhausted, ``default`` answers. Every request body is recorded.
    """

    def __init__(self):
        self.requests: list[tuple[str, dict]] = []
        self.script: list = []
        self.default = lambda path, body: (200, {"response": "# Stub issue"})
        self._lock = threading.Lock()

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append((self.path, body))
                    item = stub.script.pop(0) if stub.script else stub.default
                if item == "timeout":
                    time.sleep(5.0)
                    status, payload = 200, {"response": "too late"}
                elif callable(item):
                    status, payload = item(self.path, body)
                else:
                    status, payload = item
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):  # noqa: N802
                self.send_response(200)
                self.send_header("Content-Length", "2")
                self.end_headers()
                self.wfile.write(b"ok")

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def url(self, path: str = "/api/generate") -> str:
        return f"{self.base_url}{path}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_backend():
    stub = StubBackend()
    yield stub
    stub.close()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]
