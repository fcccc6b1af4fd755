"""Street-level image acquisition against a configurable HTTP endpoint.

The endpoint contract is two GET routes:

    {base}/metadata?lat=..&lon=..&radius=..
        -> {"panoramas": [{"id": .., "lat": .., "lon": .., "date": "YYYY-MM"}, ..]}
    {base}/image?pano=..&heading=..&size=640x640&fov=90
        -> PNG bytes

A sample point has imagery when a panorama sits within 10 m of it. Among
those, a date policy picks one: oldest-in-range (default, years 2015-2021),
oldest, or newest. Fetched images land in an on-disk cache, keyed by the
chosen panorama and heading, with a JSON sidecar per image and a per-city
point index so a repeated run makes no endpoint calls at all.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple
from concurrent.futures import ThreadPoolExecutor

import requests

from .geo import GeoPoint, project

log = logging.getLogger(__name__)

DATE_POLICIES = ("oldest-in-range", "oldest", "newest")
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ImageryError(Exception):
    """Imagery acquisition failed for a non-retryable reason."""


class EndpointError(ImageryError):
    """The endpoint misbehaved (network failure, 5xx, malformed payload)."""


@dataclass
class PanoramaInfo:
    pano_id: str
    lat: float
    lon: float
    date: str  # ISO year-first, lexicographically ordered
    distance_m: float


@dataclass
class ImageRecord:
    image_id: str
    point_id: str
    lat: float
    lon: float
    capture_date: str
    heading: float
    size_px: int
    cache_path: str
    source: str  # live | fixture | synthetic

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ImageRecord":
        return cls(**json.loads(line))


class TokenBucket:
    """Blocking rate limiter: `rate` fills per second, bursts up to capacity."""

    def __init__(self, rate_per_s: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = float(rate_per_s)
        self.capacity = max(1.0, self.rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.stamp = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}-{threading.get_ident()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def select_panorama(
    candidates: Sequence[PanoramaInfo],
    policy: str,
    min_year: int,
    max_year: int,
) -> Optional[PanoramaInfo]:
    """Pick the panorama a date policy calls for; None when nothing qualifies."""
    if policy not in DATE_POLICIES:
        raise ValueError(f"unknown date policy {policy!r}")
    pool = list(candidates)
    if policy == "oldest-in-range":
        pool = [p for p in pool if min_year <= int(p.date[:4]) <= max_year]
    if not pool:
        return None
    if policy == "newest":
        latest = max(p.date for p in pool)
        pool = [p for p in pool if p.date == latest]
        return min(pool, key=lambda p: (p.distance_m, p.pano_id))
    return min(pool, key=lambda p: (p.date, p.distance_m, p.pano_id))


class ImageryClient:
    """HTTP client with availability checks, retries, rate limiting, caching."""

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        date_policy: str = "oldest-in-range",
        date_min_year: int = 2015,
        date_max_year: int = 2021,
        availability_radius_m: float = 10.0,
        rate_limit_rps: float = 10.0,
        image_size_px: int = 640,
        fov_deg: float = 90.0,
        cache_dir="cache",
        source: str = "live",
        session: Optional[requests.Session] = None,
        max_retries: int = 3,
        retry_wait_s: float = 0.2,
        timeout_s: float = 10.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise ValueError("imagery endpoint is not configured")
        if date_policy not in DATE_POLICIES:
            raise ValueError(f"unknown date policy {date_policy!r}")
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.date_policy = date_policy
        self.date_min_year = date_min_year
        self.date_max_year = date_max_year
        self.availability_radius_m = availability_radius_m
        self.image_size_px = image_size_px
        self.fov_deg = fov_deg
        self.cache_dir = Path(cache_dir)
        self.source = source
        self.session = session or requests.Session()
        self.max_retries = max_retries
        self.retry_wait_s = retry_wait_s
        self.timeout_s = timeout_s
        self.bucket = TokenBucket(rate_limit_rps, sleep=sleep)
        self._sleep = sleep
        self._index_lock = threading.Lock()
        self._index: dict = {}  # city -> {point_id: ImageRecord}
        self._index_loaded: set = set()

    # -- endpoint plumbing ---------------------------------------------------

    def _get(self, path: str, params: dict, what: str) -> requests.Response:
        params = dict(params)
        if self.api_key:
            params["key"] = self.api_key
        last = None
        for attempt in range(self.max_retries):
            if attempt:
                self._sleep(self.retry_wait_s * (2 ** (attempt - 1)))
            self.bucket.acquire()
            try:
                resp = self.session.get(f"{self.endpoint}/{path}", params=params, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise EndpointError(f"{what}: endpoint rejected the request (HTTP {resp.status_code})")
            return resp
        raise EndpointError(f"{what}: endpoint unreachable after {self.max_retries} attempts ({last})")

    def _metadata(self, lat: float, lon: float) -> List[PanoramaInfo]:
        resp = self._get(
            "metadata",
            {"lat": repr(lat), "lon": repr(lon), "radius": repr(self.availability_radius_m)},
            "metadata",
        )
        try:
            body = resp.json()
            entries = body["panoramas"]
        except (ValueError, KeyError, TypeError) as exc:
            raise EndpointError(f"metadata: malformed response ({exc})") from exc
        origin = GeoPoint(lat, lon)
        out = []
        for e in entries:
            try:
                p = GeoPoint(float(e["lat"]), float(e["lon"]))
                local = project(p, origin)
                out.append(
                    PanoramaInfo(str(e["id"]), p.lat, p.lon, str(e["date"]), (local.x**2 + local.y**2) ** 0.5)
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise EndpointError(f"metadata: malformed panorama entry ({exc})") from exc
        return out

    # -- public operations ---------------------------------------------------

    def check_availability(self, lat: float, lon: float) -> Tuple[bool, Optional[PanoramaInfo]]:
        """Whether a usable panorama sits within the availability radius.

        Returns the panorama the configured date policy would pick, whose
        true location feeds the coverage geometry later.
        """
        candidates = [p for p in self._metadata(lat, lon) if p.distance_m <= self.availability_radius_m]
        pano = select_panorama(candidates, self.date_policy, self.date_min_year, self.date_max_year)
        return pano is not None, pano

    def _cache_paths(self, city: str, pano_id: str, heading: float) -> Tuple[Path, Path]:
        stem = f"{pano_id}_{heading:.3f}"
        base = self.cache_dir / city
        return base / f"{stem}.png", base / f"{stem}.json"

    def _index_path(self, city: str) -> Path:
        return self.cache_dir / city / "points.jsonl"

    def _load_index(self, city: str) -> dict:
        with self._index_lock:
            if city not in self._index_loaded:
                table = {}
                path = self._index_path(city)
                if path.exists():
                    for line in path.read_text().splitlines():
                        if not line.strip():
                            continue
                        try:
                            rec = ImageRecord.from_json(line)
                        except (ValueError, TypeError):
                            continue  # torn tail from an interrupted run
                        table[rec.point_id] = rec
                self._index[city] = table
                self._index_loaded.add(city)
            return self._index[city]

    def _remember(self, city: str, record: ImageRecord) -> None:
        with self._index_lock:
            self._index.setdefault(city, {})[record.point_id] = record
            path = self._index_path(city)
            with open(path, "a") as fh:
                fh.write(record.to_json() + "\n")

    def fetch_image(self, point) -> ImageRecord:
        """Fetch (or reuse) the image for one sampled point.

        point needs point_id, city, lat, lon, and view_heading attributes.
        The record's heading is the point's view heading, bit for bit.
        """
        index = self._load_index(point.city)
        cached = index.get(point.point_id)
        if cached is not None and Path(cached.cache_path).exists():
            return cached

        available, pano = self.check_availability(point.lat, point.lon)
        if not available:
            raise ImageryError(f"{point.point_id}: no panorama within {self.availability_radius_m:g} m")
        heading = point.view_heading
        png_path, sidecar_path = self._cache_paths(point.city, pano.pano_id, heading)
        png_path.parent.mkdir(parents=True, exist_ok=True)

        size = f"{self.image_size_px}x{self.image_size_px}"
        try:
            resp = self._get(
                "image",
                {"pano": pano.pano_id, "heading": repr(heading), "size": size, "fov": repr(self.fov_deg)},
                f"image for {point.point_id}",
            )
        except EndpointError as exc:
            raise EndpointError(f"{point.point_id}: {exc}") from exc
        if not resp.content.startswith(PNG_MAGIC):
            raise EndpointError(f"{point.point_id}: endpoint returned something other than a PNG")

        record = ImageRecord(
            image_id=png_path.stem,
            point_id=point.point_id,
            lat=pano.lat,
            lon=pano.lon,
            capture_date=pano.date,
            heading=heading,
            size_px=self.image_size_px,
            cache_path=str(png_path),
            source=self.source,
        )
        _atomic_write(png_path, resp.content)
        _atomic_write(sidecar_path, (record.to_json() + "\n").encode())
        self._remember(point.city, record)
        return record

    def fetch_many(self, points: Sequence, workers: int = 4) -> List[ImageRecord]:
        """Fetch all points concurrently, preserving input order."""
        results: List[Optional[ImageRecord]] = [None] * len(points)
        failures = []

        def run(i: int) -> None:
            try:
                results[i] = self.fetch_image(points[i])
            except ImageryError as exc:
                failures.append((points[i].point_id, str(exc)))

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            list(pool.map(run, range(len(points))))
        if failures:
            failures.sort()
            names = ", ".join(pid for pid, _ in failures[:5])
            more = "" if len(failures) <= 5 else f" (+{len(failures) - 5} more)"
            raise EndpointError(f"{len(failures)} fetches failed: {names}{more}; first error: {failures[0][1]}")
        return results  # type: ignore[return-value]


def write_image_records(records: Sequence[ImageRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_image_records(path) -> List[ImageRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(ImageRecord.from_json(line))
    return out
