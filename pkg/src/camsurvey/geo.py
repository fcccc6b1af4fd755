"""Planar geometry over a local equirectangular projection.

Geographic coordinates (WGS84 lat/lon degrees) are projected onto a local
tangent plane around a per-city origin:

    x = R * (lon - lon0) * cos(lat0)      (meters east)
    y = R * (lat - lat0)                  (meters north)

with R = 6,371,000 m and angles in radians. Distortion grows with distance
from the origin and with |lat|; within a ~50 km city extent at ordinary
latitudes the error is far below the sampling noise this pipeline cares
about, so no ellipsoidal correction is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

# Points within this distance (meters) of a ring edge count as on the boundary.
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 position in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class LocalPoint:
    """A projected position in meters relative to the city origin."""

    x: float
    y: float


def project(point: GeoPoint, origin: GeoPoint) -> LocalPoint:
    """Project a geographic point to local planar meters."""
    x = math.radians(point.lon - origin.lon) * EARTH_RADIUS_M * math.cos(math.radians(origin.lat))
    y = math.radians(point.lat - origin.lat) * EARTH_RADIUS_M
    return LocalPoint(x, y)


def unproject(point: LocalPoint, origin: GeoPoint) -> GeoPoint:
    """Invert :func:`project`. Round-trips to < 1e-9 degrees within city extents."""
    lon = origin.lon + math.degrees(point.x / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    lat = origin.lat + math.degrees(point.y / EARTH_RADIUS_M)
    return GeoPoint(lat, lon)


def project_many(lats, lons, origin: GeoPoint) -> np.ndarray:
    """Vectorized :func:`project`. Returns an (N, 2) float64 array of x, y."""
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    k = EARTH_RADIUS_M * math.cos(math.radians(origin.lat))
    out = np.empty((lats.size, 2), dtype=np.float64)
    out[:, 0] = np.radians(lons - origin.lon) * k
    out[:, 1] = np.radians(lats - origin.lat) * EARTH_RADIUS_M
    return out


class Polyline:
    """An open chain of local-plane vertices with cached segment lengths."""

    __slots__ = ("vertices", "seg_lengths", "cum_lengths", "length")

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] != 2:
            raise ValueError("polyline needs at least two (x, y) vertices")
        self.vertices = v
        d = np.diff(v, axis=0)
        self.seg_lengths = np.hypot(d[:, 0], d[:, 1])
        self.cum_lengths = np.concatenate([[0.0], np.cumsum(self.seg_lengths)])
        self.length = float(self.cum_lengths[-1])

    def point_at(self, distance: float) -> Tuple[float, float]:
        """Interpolated point at arc distance from the first vertex."""
        d = min(max(distance, 0.0), self.length)
        i = int(np.searchsorted(self.cum_lengths, d, side="right")) - 1
        i = min(i, len(self.seg_lengths) - 1)
        seg = self.seg_lengths[i]
        t = 0.0 if seg == 0.0 else (d - self.cum_lengths[i]) / seg
        a = self.vertices[i]
        b = self.vertices[i + 1]
        return (float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1])))

    def bearing_at(self, distance: float) -> float:
        """Compass bearing (degrees, 0 = +y north, clockwise) of the containing segment."""
        d = min(max(distance, 0.0), self.length)
        i = int(np.searchsorted(self.cum_lengths, d, side="right")) - 1
        i = min(i, len(self.seg_lengths) - 1)
        a = self.vertices[i]
        b = self.vertices[i + 1]
        return math.degrees(math.atan2(b[0] - a[0], b[1] - a[1])) % 360.0

    def bbox(self) -> Tuple[float, float, float, float]:
        v = self.vertices
        return (float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max()))


class Polygon:
    """A polygon with an exterior ring and optional holes, in local meters.

    Rings must be closed (first vertex equals last). The exterior is assumed
    non-self-intersecting; that is not checked.
    """

    __slots__ = ("exterior", "holes", "_bbox")

    def __init__(self, exterior, holes: Iterable = ()):
        self.exterior = self._ring(exterior)
        self.holes = [self._ring(h) for h in holes]
        e = self.exterior
        self._bbox = (float(e[:, 0].min()), float(e[:, 1].min()), float(e[:, 0].max()), float(e[:, 1].max()))

    @staticmethod
    def _ring(coords) -> np.ndarray:
        r = np.asarray(coords, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != 2:
            raise ValueError("ring must be an (N, 2) coordinate array")
        if r.shape[0] < 4 or not np.array_equal(r[0], r[-1]):
            raise ValueError("ring must be closed (first vertex == last) with >= 3 distinct vertices")
        if np.unique(r[:-1], axis=0).shape[0] < 3:
            raise ValueError("degenerate ring: fewer than 3 distinct vertices")
        return r

    def bbox(self) -> Tuple[float, float, float, float]:
        return self._bbox

    def rings(self) -> List[np.ndarray]:
        return [self.exterior] + self.holes


def _on_ring(x: float, y: float, ring: np.ndarray, tol: float = EDGE_TOL) -> bool:
    ax, ay = ring[:-1, 0], ring[:-1, 1]
    bx, by = ring[1:, 0], ring[1:, 1]
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    t = np.where(seg2 > 0.0, ((x - ax) * dx + (y - ay) * dy) / np.where(seg2 > 0.0, seg2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx = ax + t * dx - x
    cy = ay + t * dy - y
    return bool(np.any(cx * cx + cy * cy <= tol * tol))


def _crossings(x: float, y: float, ring: np.ndarray) -> int:
    ax, ay = ring[:-1, 0], ring[:-1, 1]
    bx, by = ring[1:, 0], ring[1:, 1]
    straddles = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = ax + (y - ay) * (bx - ax) / (by - ay)
    return int(np.count_nonzero(straddles & (x < xi)))


def point_in_polygon(point, polygon: Polygon) -> bool:
    """Even-odd containment test. Boundary points (exterior or hole rings) count as inside."""
    x, y = _xy(point)
    bx0, by0, bx1, by1 = polygon._bbox
    if x < bx0 - EDGE_TOL or x > bx1 + EDGE_TOL or y < by0 - EDGE_TOL or y > by1 + EDGE_TOL:
        return False
    crossings = 0
    for ring in polygon.rings():
        if _on_ring(x, y, ring):
            return True
        crossings += _crossings(x, y, ring)
    return crossings % 2 == 1


def _point_segment_distance2(x, y, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    t = np.where(seg2 > 0.0, ((x - ax) * dx + (y - ay) * dy) / np.where(seg2 > 0.0, seg2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx = ax + t * dx - x
    cy = ay + t * dy - y
    return cx * cx + cy * cy, t


def distance_point_to_polygon(point, polygon: Polygon) -> float:
    """Euclidean distance to the polygon; 0 exactly when the point is inside or on it."""
    if point_in_polygon(point, polygon):
        return 0.0
    x, y = _xy(point)
    best = math.inf
    for ring in polygon.rings():
        d2, _ = _point_segment_distance2(x, y, ring[:-1, 0], ring[:-1, 1], ring[1:, 0], ring[1:, 1])
        best = min(best, float(d2.min()))
    return math.sqrt(best)


def nearest_point_on_polyline(point, line: Polyline) -> Tuple[LocalPoint, float]:
    """Closest point on the chain (clamped to segment ends) and its distance."""
    x, y = _xy(point)
    v = line.vertices
    d2, t = _point_segment_distance2(x, y, v[:-1, 0], v[:-1, 1], v[1:, 0], v[1:, 1])
    i = int(np.argmin(d2))
    px = v[i, 0] + t[i] * (v[i + 1, 0] - v[i, 0])
    py = v[i, 1] + t[i] * (v[i + 1, 1] - v[i, 1])
    return LocalPoint(float(px), float(py)), math.sqrt(float(d2[i]))


def _xy(point) -> Tuple[float, float]:
    if isinstance(point, LocalPoint):
        return point.x, point.y
    return float(point[0]), float(point[1])


class SpatialIndex:
    """Uniform-grid index over feature bounding boxes.

    Queries return a superset of the features whose boxes intersect the query
    disc; callers do exact geometry on the candidates. 100 m cells are a good
    default for block-scale urban features.
    """

    def __init__(self, cell_size: float = 100.0):
        if cell_size <= 0:
            raise ValueError("cell size must be positive")
        self.cell_size = float(cell_size)
        self._cells: dict = {}
        self._bboxes: dict = {}

    def _span(self, x0, y0, x1, y1):
        c = self.cell_size
        return (
            math.floor(x0 / c), math.floor(y0 / c),
            math.floor(x1 / c), math.floor(y1 / c),
        )

    def insert(self, feature_id, bbox: Sequence[float]) -> None:
        x0, y0, x1, y1 = bbox
        if x1 < x0 or y1 < y0:
            raise ValueError("malformed bbox")
        self._bboxes[feature_id] = (x0, y0, x1, y1)
        i0, j0, i1, j1 = self._span(x0, y0, x1, y1)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                self._cells.setdefault((i, j), []).append(feature_id)

    def query(self, point, radius: float) -> List:
        """Candidate feature ids whose boxes may lie within radius of point."""
        x, y = _xy(point)
        r = max(float(radius), 0.0)
        i0, j0, i1, j1 = self._span(x - r, y - r, x + r, y + r)
        seen = set()
        out = []
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for fid in self._cells.get((i, j), ()):
                    if fid not in seen:
                        seen.add(fid)
                        out.append(fid)
        return out

    def __len__(self) -> int:
        return len(self._bboxes)
