"""How much street does each image see, and what fraction of a city that adds up to.

An image taken at a capture point with the camera pointed perpendicular to
the road sees a road span proportional to how far back the facing buildings
sit: with nearest-footprint distance delta, the visible span is d = 2*delta.
Captures more than 30 m from any footprint see too little detail to resolve
cameras and are excluded. Summed over N included images against total road
length D (both street sides):

    c = N * mean(d) / (2 * D)

Cities without a usable footprint layer fall back to an imputed span.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence

from .geo import Polygon, SpatialIndex, distance_point_to_polygon
from .ingest import CityBundle

DEFAULT_CUTOFF_M = 30.0
DEFAULT_HORIZON_M = 120.0
DEFAULT_IMPUTED_WIDTH_M = 29.0


@dataclass
class ImageCoverage:
    image_id: str
    delta_m: Optional[float]  # None when nothing is within the horizon
    width_m: Optional[float]  # d = 2 * delta
    included: bool
    beyond_horizon: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class CityCoverage:
    city: str
    n_images: int
    mean_width_m: float
    road_length_km: float
    coverage: float
    imputed: bool


class FootprintIndex:
    """Spatial index over footprint polygons for nearest-distance queries."""

    def __init__(self, footprints: Sequence[Polygon], cell_size: float = 100.0):
        self.footprints = list(footprints)
        self.index = SpatialIndex(cell_size=cell_size)
        for i, poly in enumerate(self.footprints):
            self.index.insert(i, poly.bbox())

    def nearest_distance(self, x: float, y: float, horizon: float) -> Optional[float]:
        """Distance to the nearest footprint, or None beyond the horizon.

        Grid queries return every footprint within the query radius, so if
        the closest candidate is within the radius it is the global nearest.
        """
        radius = min(DEFAULT_CUTOFF_M, horizon)
        while True:
            candidates = self.index.query((x, y), radius)
            best = None
            for i in candidates:
                d = distance_point_to_polygon((x, y), self.footprints[i])
                if best is None or d < best:
                    best = d
            if best is not None and best <= radius:
                return best
            if radius >= horizon:
                return best if (best is not None and best <= horizon) else None
            radius = min(radius * 2.0, horizon)


def image_coverage(
    image_id: str,
    x: float,
    y: float,
    index: FootprintIndex,
    cutoff_m: float = DEFAULT_CUTOFF_M,
    horizon_m: float = DEFAULT_HORIZON_M,
) -> ImageCoverage:
    """Coverage of one capture point from its nearest building footprint."""
    delta = index.nearest_distance(x, y, horizon_m)
    if delta is None:
        return ImageCoverage(image_id, None, None, included=False, beyond_horizon=True)
    return ImageCoverage(image_id, delta, 2.0 * delta, included=delta <= cutoff_m, beyond_horizon=False)


def coverage_fraction(n_images: int, mean_width_m: float, road_length_km: float) -> float:
    """c = N * mean width / (2 * D), the sampled fraction of all street sides."""
    if road_length_km <= 0:
        raise ValueError("road length must be positive")
    if n_images < 0 or mean_width_m < 0:
        raise ValueError("image count and width must be non-negative")
    return n_images * mean_width_m / (2.0 * road_length_km * 1000.0)


def city_coverage(city: str, records: Sequence[ImageCoverage], road_length_km: float) -> CityCoverage:
    """Aggregate included records into a city coverage fraction."""
    widths = [r.width_m for r in records if r.included]
    if not widths:
        raise ValueError(f"{city}: no images within {DEFAULT_CUTOFF_M:.0f} m of a footprint; cannot compute coverage")
    n = len(widths)
    mean_width = sum(widths) / n
    c = coverage_fraction(n, mean_width, road_length_km)
    if c > 1.0:
        warnings.warn(f"{city}: coverage fraction {c:.2f} exceeds 1; sample re-covers the same road")
    return CityCoverage(city, n, mean_width, road_length_km, c, imputed=False)


def impute_city_coverage(
    bundle: CityBundle,
    n_images: int,
    imputed_width_m: float = DEFAULT_IMPUTED_WIDTH_M,
) -> CityCoverage:
    """Coverage for footprint-poor cities using a fixed mean span.

    Only valid when the bundle has no footprint layer; with footprints
    present the measured geometry must be used instead.
    """
    if bundle.footprints is not None:
        raise ValueError(f"{bundle.name}: footprints are present; refusing to impute coverage")
    c = coverage_fraction(n_images, imputed_width_m, bundle.road_length_km)
    if c > 1.0:
        warnings.warn(f"{bundle.name}: coverage fraction {c:.2f} exceeds 1; sample re-covers the same road")
    return CityCoverage(bundle.name, n_images, imputed_width_m, bundle.road_length_km, c, imputed=True)


def compute_city_coverage(
    bundle: CityBundle,
    capture_points,
    cutoff_m: float = DEFAULT_CUTOFF_M,
    horizon_m: float = DEFAULT_HORIZON_M,
    imputed_width_m: float = DEFAULT_IMPUTED_WIDTH_M,
) -> tuple:
    """Per-image records plus the city aggregate for (image_id, x, y) captures."""
    if bundle.impute_coverage or bundle.footprints is None:
        records = [ImageCoverage(i, None, None, True, False) for i, _x, _y in capture_points]
        return records, impute_city_coverage(bundle, len(records), imputed_width_m)
    index = FootprintIndex(bundle.footprints)
    records = [image_coverage(i, x, y, index, cutoff_m, horizon_m) for i, x, y in capture_points]
    return records, city_coverage(bundle.name, records, bundle.road_length_km)


def write_city_coverage_csv(rows: List[CityCoverage], path) -> None:
    with open(path, "w") as fh:
        fh.write("city,n_images,mean_width_m,road_length_km,coverage,imputed\n")
        for r in rows:
            fh.write(
                f"{r.city},{r.n_images},{r.mean_width_m!r},{r.road_length_km!r},{r.coverage!r},{int(r.imputed)}\n"
            )


def read_city_coverage_csv(path) -> List[CityCoverage]:
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("city,"):
            raise ValueError(f"{path}: not a coverage summary file")
        for line in fh:
            if not line.strip():
                continue
            city, n, width, d_km, c, imputed = line.rstrip("\n").split(",")
            rows.append(CityCoverage(city, int(n), float(width), float(d_km), float(c), bool(int(imputed))))
    return rows
