"""Load city GIS layers into a local-plane bundle.

Inputs are GeoJSON feature collections in WGS84: road centerlines
(LineString/MultiLineString), a city boundary, and optional building
footprints, zoning parcels, and census block groups with demographic
attributes. Everything is projected around the boundary's area centroid and
roads are clipped to the boundary, splitting at crossings, so that total road
length matches the surveyed extent.

Zoning codes are city-specific; a two-column mapping table turns raw codes
into the standard categories used downstream.
"""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .geo import GeoPoint, Polygon, Polyline, point_in_polygon, project_many

ZONE_CATEGORIES = ("mixed", "industrial", "commercial", "public", "residential", "unknown")

# Sub-intervals shorter than this (meters) are clipping noise, not road.
_SLIVER_M = 1e-9


@dataclass
class ParcelRecord:
    parcel_id: str
    polygon: Polygon
    zone_raw: str
    zone: str


@dataclass
class BlockGroupRecord:
    group_id: str
    polygon: Polygon
    minority_share: Optional[float]


@dataclass
class CityBundle:
    """One city's layers, projected and clipped, ready for the pipeline."""

    name: str
    origin: GeoPoint
    boundary: List[Polygon]
    network: List[Polyline]
    road_ids: List[str]
    footprints: Optional[List[Polygon]]
    parcels: Optional[List[ParcelRecord]]
    blockgroups: Optional[List[BlockGroupRecord]]
    impute_coverage: bool = False

    @property
    def total_length_m(self) -> float:
        return float(sum(line.length for line in self.network))

    @property
    def road_length_km(self) -> float:
        return self.total_length_m / 1000.0

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            pickle.dump(self, fh, protocol=4)

    @staticmethod
    def load(path) -> "CityBundle":
        with open(path, "rb") as fh:
            bundle = pickle.load(fh)
        if not isinstance(bundle, CityBundle):
            raise ValueError(f"{path}: not a city bundle")
        return bundle


def load_city(
    name: str,
    roads_path,
    boundary_path,
    footprints_path=None,
    parcels_path=None,
    blockgroups_path=None,
    zone_table: Optional[dict] = None,
) -> CityBundle:
    """Read, project, and clip a city's layers.

    Missing required files raise with the offending path. An absent (None)
    footprints path is allowed and flags the bundle for imputed coverage;
    a path that is given but does not exist is still an error.
    """
    boundary_feats = _read_features(boundary_path)
    boundary_rings = []
    for idx, geom, _props, _fid in boundary_feats:
        boundary_rings.extend(_polygon_coords(geom, boundary_path, idx))
    if not boundary_rings:
        raise ValueError(f"{boundary_path}: no usable boundary polygon")
    origin = _area_centroid(boundary_rings)
    boundary = [
        Polygon(project_many(ext[:, 1], ext[:, 0], origin), [project_many(h[:, 1], h[:, 0], origin) for h in holes])
        for ext, holes in boundary_rings
    ]

    network: List[Polyline] = []
    road_ids: List[str] = []
    for idx, geom, props, fid in _read_features(roads_path):
        base_id = _feature_id(fid, props, idx)
        for part_no, coords in enumerate(_line_coords(geom, roads_path, idx)):
            local = project_many(coords[:, 1], coords[:, 0], origin)
            for piece_no, piece in enumerate(clip_polyline(local, boundary)):
                network.append(Polyline(piece))
                suffix = "" if (part_no, piece_no) == (0, 0) else f"/{part_no}.{piece_no}"
                road_ids.append(f"{base_id}{suffix}")

    footprints = None
    if footprints_path is not None:
        footprints = []
        for idx, geom, _props, _fid in _read_features(footprints_path):
            for ext, holes in _polygon_coords(geom, footprints_path, idx):
                poly = Polygon(
                    project_many(ext[:, 1], ext[:, 0], origin),
                    [project_many(h[:, 1], h[:, 0], origin) for h in holes],
                )
                if _touches_boundary(poly, boundary):
                    footprints.append(poly)

    parcels = None
    if parcels_path is not None:
        table = zone_table if zone_table is not None else {}
        parcels = []
        for idx, geom, props, fid in _read_features(parcels_path):
            raw = str(props.get("zone", ""))
            pid = _feature_id(fid, props, idx)
            for part_no, (ext, holes) in enumerate(_polygon_coords(geom, parcels_path, idx)):
                poly = Polygon(
                    project_many(ext[:, 1], ext[:, 0], origin),
                    [project_many(h[:, 1], h[:, 0], origin) for h in holes],
                )
                if not _touches_boundary(poly, boundary):
                    continue
                suffix = "" if part_no == 0 else f"/{part_no}"
                parcels.append(ParcelRecord(f"{pid}{suffix}", poly, raw, standardize_zone(raw, table)))

    blockgroups = None
    if blockgroups_path is not None:
        blockgroups = []
        for idx, geom, props, fid in _read_features(blockgroups_path):
            share = props.get("minority_share")
            if share is not None:
                share = float(share)
                if not 0.0 <= share <= 1.0:
                    raise ValueError(f"{blockgroups_path}: feature {idx}: minority_share {share} outside [0, 1]")
            gid = _feature_id(fid, props, idx)
            for part_no, (ext, holes) in enumerate(_polygon_coords(geom, blockgroups_path, idx)):
                poly = Polygon(
                    project_many(ext[:, 1], ext[:, 0], origin),
                    [project_many(h[:, 1], h[:, 0], origin) for h in holes],
                )
                if not _touches_boundary(poly, boundary):
                    continue
                suffix = "" if part_no == 0 else f"/{part_no}"
                blockgroups.append(BlockGroupRecord(f"{gid}{suffix}", poly, share))

    return CityBundle(
        name=name,
        origin=origin,
        boundary=boundary,
        network=network,
        road_ids=road_ids,
        footprints=footprints,
        parcels=parcels,
        blockgroups=blockgroups,
        impute_coverage=footprints_path is None,
    )


def _touches_boundary(poly: Polygon, boundary: Sequence[Polygon]) -> bool:
    # bbox overlap is enough here: features wholly outside the city are dropped,
    # border-straddling ones are kept whole (nearest/containment joins handle them)
    x0, y0, x1, y1 = poly.bbox()
    for b in boundary:
        bx0, by0, bx1, by1 = b.bbox()
        if x0 <= bx1 and x1 >= bx0 and y0 <= by1 and y1 >= by0:
            return True
    return False


def _read_features(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"required input file is missing: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}: not valid JSON ({exc})") from None
    if doc.get("type") == "FeatureCollection":
        feats = doc.get("features", [])
    elif doc.get("type") == "Feature":
        feats = [doc]
    elif "type" in doc:
        feats = [{"type": "Feature", "geometry": doc, "properties": {}}]
    else:
        raise ValueError(f"{p}: expected a GeoJSON feature collection")
    out = []
    for idx, feat in enumerate(feats):
        if not isinstance(feat, dict) or feat.get("type") != "Feature" or not isinstance(feat.get("geometry"), dict):
            raise ValueError(f"{p}: feature {idx} is malformed")
        out.append((idx, feat["geometry"], feat.get("properties") or {}, feat.get("id")))
    return out


def _feature_id(fid, props, idx) -> str:
    if fid is not None:
        return str(fid)
    if "id" in props:
        return str(props["id"])
    return str(idx)


def _line_coords(geom, path, idx) -> List[np.ndarray]:
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    try:
        if gtype == "LineString":
            parts = [coords]
        elif gtype == "MultiLineString":
            parts = coords
        else:
            raise ValueError(f"{path}: feature {idx}: expected LineString, got {gtype}")
        out = []
        for part in parts:
            arr = np.asarray(part, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
                raise ValueError(f"{path}: feature {idx}: line needs >= 2 positions")
            out.append(arr[:, :2])
        return out
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: feature {idx} is malformed: {exc}") from None


def _polygon_coords(geom, path, idx):
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    try:
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise ValueError(f"{path}: feature {idx}: expected Polygon, got {gtype}")
        out = []
        for rings in parts:
            ext = np.asarray(rings[0], dtype=np.float64)[:, :2]
            holes = [np.asarray(r, dtype=np.float64)[:, :2] for r in rings[1:]]
            out.append((ext, holes))
        return out
    except (TypeError, ValueError, IndexError) as exc:
        raise ValueError(f"{path}: feature {idx} is malformed: {exc}") from None


def _area_centroid(boundary_rings) -> GeoPoint:
    # shoelace centroid of the exterior rings, in raw lon/lat; only used to
    # anchor the projection, so spherical distortion here is irrelevant
    cx = cy = total = 0.0
    for ext, _holes in boundary_rings:
        x, y = ext[:-1, 0], ext[:-1, 1]
        xn, yn = ext[1:, 0], ext[1:, 1]
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        if a == 0.0:
            continue
        cx += float(((x + xn) * cross).sum() / 6.0)
        cy += float(((y + yn) * cross).sum() / 6.0)
        total += a
    if total == 0.0:
        raise ValueError("boundary polygon has zero area")
    return GeoPoint(cy / total, cx / total)


def _inside_any(x: float, y: float, boundary: Sequence[Polygon]) -> bool:
    return any(point_in_polygon((x, y), poly) for poly in boundary)


def clip_polyline(vertices: np.ndarray, boundary: Sequence[Polygon]) -> List[np.ndarray]:
    """Clip a local-plane vertex chain to the boundary polygons.

    Returns the inside pieces, split at boundary crossings. A chain that is
    entirely inside comes back as the original array (clipping a clipped
    road changes nothing).
    """
    v = np.asarray(vertices, dtype=np.float64)
    edges = _boundary_edges(boundary)
    pieces: List[List[np.ndarray]] = []
    open_piece: Optional[List] = None
    fully_inside = True

    for i in range(len(v) - 1):
        a, b = v[i], v[i + 1]
        ts = _crossing_params(a, b, edges)
        kept = []
        for t0, t1 in zip(ts[:-1], ts[1:]):
            if (t1 - t0) * np.hypot(*(b - a)) <= _SLIVER_M:
                continue
            tm = (t0 + t1) / 2.0
            mid = a + tm * (b - a)
            if _inside_any(mid[0], mid[1], boundary):
                kept.append((t0, t1))
        merged = _merge_intervals(kept)
        if merged != [(0.0, 1.0)]:
            fully_inside = False
        for t0, t1 in merged:
            p0 = a if t0 == 0.0 else a + t0 * (b - a)
            p1 = b if t1 == 1.0 else a + t1 * (b - a)
            if open_piece is not None and t0 == 0.0 and np.array_equal(open_piece[-1], a):
                open_piece.append(p1)
            else:
                open_piece = [p0, p1]
                pieces.append(open_piece)
            if t1 != 1.0:
                open_piece = None
        if not merged or merged[-1][1] != 1.0:
            open_piece = None

    if fully_inside and len(pieces) == 1:
        return [v]
    return [np.asarray(p) for p in pieces]


def _boundary_edges(boundary: Sequence[Polygon]) -> np.ndarray:
    chunks = []
    for poly in boundary:
        for ring in poly.rings():
            chunks.append(np.hstack([ring[:-1], ring[1:]]))
    return np.vstack(chunks) if chunks else np.empty((0, 4))


def _crossing_params(a, b, edges: np.ndarray) -> List[float]:
    ts = {0.0, 1.0}
    if len(edges):
        r = b - a
        qx, qy, q2x, q2y = edges[:, 0], edges[:, 1], edges[:, 2], edges[:, 3]
        sx, sy = q2x - qx, q2y - qy
        denom = r[0] * sy - r[1] * sx
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((qx - a[0]) * sy - (qy - a[1]) * sx) / denom
            u = ((qx - a[0]) * r[1] - (qy - a[1]) * r[0]) / denom
        ok = (denom != 0) & (t >= 0.0) & (t <= 1.0) & (u >= -1e-12) & (u <= 1.0 + 1e-12)
        for val in t[ok]:
            ts.add(min(max(float(val), 0.0), 1.0))
    out = sorted(ts)
    # collapse params that differ by < 1e-12 to keep sliver handling stable
    dedup = [out[0]]
    for t in out[1:]:
        if t - dedup[-1] > 1e-12:
            dedup.append(t)
    if dedup[-1] != 1.0:
        dedup.append(1.0)
    return dedup


def _merge_intervals(intervals):
    merged = []
    for t0, t1 in intervals:
        if merged and merged[-1][1] == t0:
            merged[-1] = (merged[-1][0], t1)
        else:
            merged.append((t0, t1))
    return merged


def load_zone_table(source) -> dict:
    """Read a two-column raw-code -> category table.

    ``source`` is a path, or a bare city name resolved against the tables
    shipped with the package. Lines are ``CODE<whitespace>category``; ``#``
    starts a comment.
    """
    path = Path(source)
    if path.suffix == "" and not path.exists():
        res = resources.files("camsurvey").joinpath(f"data/zones/{source}.tsv")
        if not res.is_file():
            raise FileNotFoundError(f"no packaged zone table named {source!r}")
        text = res.read_text()
        label = f"data/zones/{source}.tsv"
    else:
        if not path.exists():
            raise FileNotFoundError(f"required input file is missing: {path}")
        text = path.read_text()
        label = str(path)
    table = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{label}:{lineno}: expected 'CODE category'")
        code, category = parts[0].upper(), parts[1].lower()
        if category not in ZONE_CATEGORIES or category == "unknown":
            raise ValueError(f"{label}:{lineno}: unknown category {category!r}")
        table[code] = category
    return table


def standardize_zone(raw, table: dict) -> str:
    """Map a raw zoning code to a standard category; unmapped codes are unknown."""
    if raw is None:
        return "unknown"
    return table.get(str(raw).strip().upper(), "unknown")
