"""In-process imagery endpoint for tests and demos.

Serves the same two routes a live provider would, backed by a panorama
manifest instead of a real image archive:

    /metadata?lat=..&lon=..&radius=..   panoramas within radius meters
    /image?pano=..&size=WxH            deterministic PNG for the panorama

Image bytes come from the manifest entry's `file` if given, otherwise a
flat-colour PNG derived from the panorama id, so repeated requests are
byte-identical. The server records every request and can be told to fail
the next few, which is how retry behaviour gets exercised.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import List, Optional, Sequence
from urllib.parse import parse_qs, urlparse

from PIL import Image

from .geo import GeoPoint, project


def _pano_png(pano_id: str, width: int, height: int) -> bytes:
    digest = hashlib.sha256(pano_id.encode()).digest()
    img = Image.new("RGB", (width, height), tuple(digest[:3]))
    # one marked pixel so different panoramas never collide as pure colour fills
    img.putpixel((0, 0), tuple(digest[3:6]))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class _Handler(BaseHTTPRequestHandler):
    server: "FixtureImageryServer"

    def log_message(self, *args):  # keep pytest output clean
        pass

    def _send(self, status: int, content_type: str, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        with self.server.state_lock:
            self.server.request_log.append(url.path)
            if self.server.failures_left > 0:
                self.server.failures_left -= 1
                self._send(500, "text/plain", b"injected failure")
                return
        if url.path == "/metadata":
            self._metadata(query)
        elif url.path == "/image":
            self._image(query)
        else:
            self._send(404, "text/plain", b"no such route")

    def _metadata(self, query: dict) -> None:
        try:
            origin = GeoPoint(float(query["lat"]), float(query["lon"]))
            radius = float(query.get("radius", "10"))
        except (KeyError, ValueError):
            self._send(400, "text/plain", b"lat, lon, radius required")
            return
        hits = []
        for pano in self.server.panoramas:
            local = project(GeoPoint(pano["lat"], pano["lon"]), origin)
            if (local.x**2 + local.y**2) ** 0.5 <= radius:
                hits.append({"id": pano["id"], "lat": pano["lat"], "lon": pano["lon"], "date": pano["date"]})
        self._send(200, "application/json", json.dumps({"panoramas": hits}).encode())

    def _image(self, query: dict) -> None:
        pano_id = query.get("pano", "")
        pano = next((p for p in self.server.panoramas if p["id"] == pano_id), None)
        if pano is None:
            self._send(404, "text/plain", b"unknown panorama")
            return
        try:
            w, h = (int(v) for v in query.get("size", "640x640").split("x"))
        except ValueError:
            self._send(400, "text/plain", b"bad size")
            return
        if "file" in pano:
            payload = Path(pano["file"]).read_bytes()
        else:
            payload = _pano_png(pano_id, w, h)
        self._send(200, "image/png", payload)


class FixtureImageryServer(ThreadingHTTPServer):
    """Bind to an ephemeral local port and serve a panorama manifest."""

    def __init__(self, panoramas: Sequence[dict], host: str = "127.0.0.1"):
        super().__init__((host, 0), _Handler)
        self.panoramas: List[dict] = list(panoramas)
        self.request_log: List[str] = []
        self.failures_left = 0
        self.state_lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def fail_next(self, n: int) -> None:
        with self.state_lock:
            self.failures_left = n

    def request_count(self, path: Optional[str] = None) -> int:
        with self.state_lock:
            if path is None:
                return len(self.request_log)
            return sum(1 for p in self.request_log if p == path)

    def start(self) -> "FixtureImageryServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread is not None:
            self._thread.join()
        self.server_close()
