"""Length-weighted uniform sampling of road-network points.

Each draw picks a network segment with probability proportional to its
length, then a uniform position along it, so points are uniform over total
road length. Every point gets a view heading perpendicular to the road
(left or right by fair coin), matching how the imagery is captured.

Randomness comes from a per-city PCG64 substream seeded with
(master seed, sha256(city name)), so runs are reproducible bit-for-bit and
cities do not share streams regardless of processing order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .geo import GeoPoint, LocalPoint, Polyline, unproject
from .ingest import CityBundle

PENDING = "pending"
NO_IMAGERY = "no_imagery"
IMAGED = "imaged"


class SamplingError(RuntimeError):
    pass


@dataclass
class SamplePoint:
    point_id: str
    city: str
    lat: float
    lon: float
    x: float
    y: float
    road_id: str
    road_bearing: float
    view_heading: float
    side: str
    status: str = PENDING

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "SamplePoint":
        return SamplePoint(**json.loads(line))


def city_rng(master_seed: int, city: str) -> np.random.Generator:
    """Independent, reproducible per-city random stream."""
    city_key = int.from_bytes(hashlib.sha256(city.encode()).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([master_seed, city_key]))


class _FlatNetwork:
    """Road network flattened to segment arrays for O(log m) draws."""

    def __init__(self, network: Sequence[Polyline], road_ids: Sequence[str]):
        if not network:
            raise SamplingError("cannot sample an empty road network")
        a_parts, b_parts, ids = [], [], []
        for line, rid in zip(network, road_ids):
            a_parts.append(line.vertices[:-1])
            b_parts.append(line.vertices[1:])
            ids.extend([rid] * (len(line.vertices) - 1))
        self.a = np.vstack(a_parts)
        self.b = np.vstack(b_parts)
        self.ids = ids
        d = self.b - self.a
        self.lengths = np.hypot(d[:, 0], d[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.total = float(self.cum[-1])
        if self.total <= 0.0:
            raise SamplingError("road network has zero total length")

    def locate(self, u: float) -> Tuple[int, float]:
        """Segment index and along-segment fraction for arc position u."""
        i = int(np.searchsorted(self.cum, u, side="right")) - 1
        i = min(max(i, 0), len(self.lengths) - 1)
        seg = self.lengths[i]
        t = 0.0 if seg == 0.0 else (u - self.cum[i]) / seg
        return i, min(max(t, 0.0), 1.0)

    def point(self, i: int, t: float) -> Tuple[float, float, float]:
        ax, ay = self.a[i]
        bx, by = self.b[i]
        x = ax + t * (bx - ax)
        y = ay + t * (by - ay)
        bearing = math.degrees(math.atan2(bx - ax, by - ay)) % 360.0
        return x, y, bearing


def _draw_point(flat: _FlatNetwork, rng: np.random.Generator, origin: GeoPoint, city: str, seq: int) -> SamplePoint:
    u = rng.random() * flat.total
    i, t = flat.locate(u)
    x, y, bearing = flat.point(i, t)
    side = "right" if rng.integers(0, 2) == 1 else "left"
    heading = (bearing + 90.0) % 360.0 if side == "right" else (bearing - 90.0) % 360.0
    geo = unproject(LocalPoint(x, y), origin)
    return SamplePoint(
        point_id=f"{city}-{seq:07d}",
        city=city,
        lat=geo.lat,
        lon=geo.lon,
        x=x,
        y=y,
        road_id=flat.ids[i],
        road_bearing=bearing,
        view_heading=heading,
        side=side,
    )


def sample_points(bundle: CityBundle, n: int, master_seed: int) -> List[SamplePoint]:
    """Draw n length-weighted uniform points with perpendicular view headings."""
    if n < 1:
        raise ValueError("n must be >= 1")
    flat = _FlatNetwork(bundle.network, bundle.road_ids)
    rng = city_rng(master_seed, bundle.name)
    return [_draw_point(flat, rng, bundle.origin, bundle.name, k) for k in range(n)]


def apply_availability(
    bundle: CityBundle,
    points: List[SamplePoint],
    oracle: Callable[[SamplePoint], bool],
    master_seed: int,
    cap_factor: int = 10,
) -> Tuple[List[SamplePoint], dict]:
    """Replace points without imagery by fresh independent draws.

    Each rejected point is redrawn (uniform over the whole network, not near
    the rejected location) until the oracle accepts, keeping the sample
    size at n. Draws are capped at cap_factor * n in total; exceeding the cap
    aborts with the observed availability rate, which signals a coverage
    problem rather than sampling bad luck.
    """
    n = len(points)
    if n == 0:
        return [], {"total_draws": 0, "rejected": 0, "availability_rate": 1.0}
    flat = _FlatNetwork(bundle.network, bundle.road_ids)
    rng = city_rng(master_seed, bundle.name + "/availability")
    cap = cap_factor * n
    total_draws = n
    rejected = 0
    out: List[SamplePoint] = []
    seq = n  # replacement ids continue after the initial draws
    for point in points:
        candidate = point
        while not oracle(candidate):
            candidate.status = NO_IMAGERY
            rejected += 1
            if total_draws >= cap:
                rate = (total_draws - rejected) / total_draws
                raise SamplingError(
                    f"imagery availability too low: {total_draws} draws for {len(out)} "
                    f"accepted points (observed availability {rate:.1%}); "
                    f"cap is {cap_factor}x the requested sample count"
                )
            candidate = _draw_point(flat, rng, bundle.origin, bundle.name, seq)
            seq += 1
            total_draws += 1
        out.append(candidate)
    rate = n / total_draws
    return out, {"total_draws": total_draws, "rejected": rejected, "availability_rate": rate}


def write_points(points: List[SamplePoint], path) -> None:
    with open(path, "w") as fh:
        for p in points:
            fh.write(p.to_json() + "\n")


def read_points(path) -> List[SamplePoint]:
    with open(path) as fh:
        return [SamplePoint.from_json(line) for line in fh if line.strip()]
