"""Shared fixture builders: small GeoJSON cities written to temp dirs."""

import json
from pathlib import Path

from camsurvey.geo import GeoPoint, unproject, LocalPoint

ORIGIN = GeoPoint(37.7749, -122.4194)


def lonlat(x, y, origin=ORIGIN):
    g = unproject(LocalPoint(x, y), origin)
    return [g.lon, g.lat]


def ring_lonlat(ring_xy, origin=ORIGIN):
    return [lonlat(x, y, origin) for x, y in ring_xy]


def feature(geometry, properties=None, fid=None):
    f = {"type": "Feature", "geometry": geometry, "properties": properties or {}}
    if fid is not None:
        f["id"] = fid
    return f


def line_feature(vertices_xy, properties=None, fid=None, origin=ORIGIN):
    geom = {"type": "LineString", "coordinates": ring_lonlat(vertices_xy, origin)}
    return feature(geom, properties, fid)


def polygon_feature(exterior_xy, holes_xy=(), properties=None, fid=None, origin=ORIGIN):
    coords = [ring_lonlat(exterior_xy, origin)] + [ring_lonlat(h, origin) for h in holes_xy]
    return feature({"type": "Polygon", "coordinates": coords}, properties, fid)


def write_collection(path, features):
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True))
    return Path(path)


def square_ring(half, cx=0.0, cy=0.0):
    return [
        (cx - half, cy - half),
        (cx + half, cy - half),
        (cx + half, cy + half),
        (cx - half, cy + half),
        (cx - half, cy - half),
    ]
