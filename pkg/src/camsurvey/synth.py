"""Synthetic city with planted cameras, for validating the whole pipeline.

The generator lays out a Manhattan grid of rows x cols blocks. With spacing
s there are (rows+1) horizontal streets of length cols*s and (cols+1)
vertical ones of length rows*s, so the total road length is

    L = s * ((rows + 1) * cols + (cols + 1) * rows)

Each block carries one square building footprint inset by the setback from
the surrounding streets, so a capture point mid-block sits exactly
setback meters from the nearest wall and its image spans 2*setback of
street. Cameras are planted along the network by a Poisson process and
offset onto a block face.

A camera is sightable from a capture point only when the point is on the
same street, faces the camera's side, the camera falls inside the 45
degree half-angle wedge around the view heading, and is within 30 m.
The wedge admits captures up to one lateral offset away along the street,
so a camera's visibility window is 2*setback of road, the same span the
coverage geometry books for each image; that alignment is what makes the
count estimator's premises hold by construction. The simulated detector
then drops each sighting with probability 1 - recall and injects false
positives for the verification path to reject.
"""

from __future__ import annotations

import json
import math
import tempfile
from dataclasses import dataclass, field, asdict
from pathlib import Path
from types import SimpleNamespace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coverage import compute_city_coverage
from .detect import ProbabilityMap
from .estimate import estimate_city
from .geo import GeoPoint, LocalPoint, Polygon, Polyline, project, unproject
from .ingest import BlockGroupRecord, CityBundle, ParcelRecord
from .sampler import sample_points
from .verify import VerifyStore

VISIBLE_RANGE_M = 30.0
WEDGE_COS = math.cos(math.pi / 4.0)

BLOCK_ZONES = ("residential", "commercial", "industrial", "mixed", "public")
BLOCK_ZONE_CODES = {"residential": "R", "commercial": "C", "industrial": "M", "mixed": "MX", "public": "P"}


@dataclass
class CameraSite:
    camera_id: str
    street: str
    u: float  # meters along the street
    side: str  # left | right of the street's direction
    x: float
    y: float


@dataclass
class SyntheticCity:
    bundle: CityBundle
    cameras: List[CameraSite]
    seed: int
    rows: int
    cols: int
    spacing: float
    setback: float

    @property
    def true_count(self) -> int:
        return len(self.cameras)


def grid_road_length_m(rows: int, cols: int, spacing: float) -> float:
    return spacing * ((rows + 1) * cols + (cols + 1) * rows)


def _rect(x0, y0, x1, y1) -> Polygon:
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])


def generate_city(
    rows: int,
    cols: int,
    spacing: float,
    setback: float,
    camera_density_per_km: float,
    seed: int,
    camera_count: Optional[int] = None,
    name: str = "synthia",
) -> SyntheticCity:
    """Build the grid city and plant cameras, deterministically per seed.

    camera_count pins the number of cameras exactly (positions stay
    Poisson-uniform along the network); otherwise the count itself is
    Poisson with mean density * road km.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one block in each direction")
    if not spacing > 2 * setback > 0:
        raise ValueError(f"need spacing > 2*setback > 0, got spacing={spacing} setback={setback}")
    if setback > VISIBLE_RANGE_M:
        raise ValueError(f"setback {setback} puts cameras beyond the {VISIBLE_RANGE_M:.0f} m sight range")
    if camera_density_per_km < 0:
        raise ValueError("camera density must be non-negative")

    s = float(spacing)
    network: List[Polyline] = []
    road_ids: List[str] = []
    for j in range(rows + 1):
        network.append(Polyline([(0.0, j * s), (cols * s, j * s)]))
        road_ids.append(f"h{j}")
    for i in range(cols + 1):
        network.append(Polyline([(i * s, 0.0), (i * s, rows * s)]))
        road_ids.append(f"v{i}")

    footprints: List[Polygon] = []
    parcels: List[ParcelRecord] = []
    for bj in range(rows):
        for bi in range(cols):
            rect = _rect(bi * s + setback, bj * s + setback, (bi + 1) * s - setback, (bj + 1) * s - setback)
            footprints.append(rect)
            zone = BLOCK_ZONES[(bi + bj * cols) % len(BLOCK_ZONES)]
            parcels.append(ParcelRecord(f"blk-{bi:02d}-{bj:02d}", rect, BLOCK_ZONE_CODES[zone], zone))

    margin = 10.0
    width, height = cols * s, rows * s
    boundary = _rect(-margin, -margin, width + margin, height + margin)
    shares = (0.15, 0.35, 0.55, 0.75)
    blockgroups = []
    for q, (qx, qy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
        x0 = -margin if qx == 0 else width / 2
        x1 = width / 2 if qx == 0 else width + margin
        y0 = -margin if qy == 0 else height / 2
        y1 = height / 2 if qy == 0 else height + margin
        blockgroups.append(BlockGroupRecord(f"bg-{q}", _rect(x0, y0, x1, y1), shares[q]))

    bundle = CityBundle(
        name=name,
        origin=GeoPoint(0.0, 0.0),
        boundary=[boundary],
        network=network,
        road_ids=road_ids,
        footprints=footprints,
        parcels=parcels,
        blockgroups=blockgroups,
        impute_coverage=False,
    )

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5C17]))
    lengths = np.array([line.length for line in network])
    cum = np.cumsum(lengths)
    total = float(cum[-1])
    if camera_count is None:
        count = int(rng.poisson(camera_density_per_km * total / 1000.0))
    else:
        count = int(camera_count)

    cameras: List[CameraSite] = []
    for k in range(count):
        u = rng.random() * total  # position first, then the side coin
        side = "right" if rng.integers(0, 2) == 1 else "left"
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, len(network) - 1)
        local_u = u - (cum[idx - 1] if idx else 0.0)
        line = network[idx]
        px, py = line.point_at(local_u)
        bearing = line.bearing_at(local_u)
        heading = (bearing + 90.0) % 360.0 if side == "right" else (bearing - 90.0) % 360.0
        rad = math.radians(heading)
        cx = px + setback * math.sin(rad)
        cy = py + setback * math.cos(rad)
        cameras.append(CameraSite(f"cam-{k:05d}", road_ids[idx], local_u, side, cx, cy))

    return SyntheticCity(bundle, cameras, int(seed), rows, cols, s, float(setback))


def camera_visible(point, camera: CameraSite, sight_range: float = VISIBLE_RANGE_M) -> bool:
    """Sightability rule for one (capture point, camera) pair.

    Same street, matching side, within range, and inside the 45 degree
    half-angle wedge around the view heading.
    """
    if point.road_id != camera.street or point.side != camera.side:
        return False
    dx = camera.x - point.x
    dy = camera.y - point.y
    dist = math.hypot(dx, dy)
    if dist > sight_range:
        return False
    if dist == 0.0:
        return True
    rad = math.radians(point.view_heading)
    return (dx * math.sin(rad) + dy * math.cos(rad)) / dist >= WEDGE_COS


@dataclass
class SimDetection:
    image_id: str
    bbox: Tuple[int, int, int, int]
    camera_id: Optional[str]  # None marks an injected false positive


@dataclass
class SimulationResult:
    detections: List[SimDetection]
    true_boxes: Dict[str, List[Tuple[int, int, int, int]]]
    visible_pairs: int
    true_detections: int
    false_positives: int
    maps: Optional[Dict[str, ProbabilityMap]] = None


MAP_SIZE = 64
_SLOT_STEP = 14
_SLOT_EDGE = 8
_SLOTS_PER_ROW = 4
MAX_DETECTIONS_PER_IMAGE = _SLOTS_PER_ROW * _SLOTS_PER_ROW


def _slot_box(k: int) -> Tuple[int, int, int, int]:
    x = 4 + _SLOT_STEP * (k % _SLOTS_PER_ROW)
    y = 4 + _SLOT_STEP * (k // _SLOTS_PER_ROW)
    return (x, y, _SLOT_EDGE, _SLOT_EDGE)


def simulate_detector(
    city,
    points: Sequence,
    recall: float,
    fp_rate: float = 0.0,
    seed: int = 0,
    maps: bool = False,
) -> SimulationResult:
    """Emit detections for sightable cameras with the given recall.

    ``city`` is a SyntheticCity or a bare camera list (the points and the
    cameras must share one local frame; see load_planted_cameras). Each
    sightable camera is reported with probability `recall`; per image, an
    extra Poisson(fp_rate) count of false positives is injected. Boxes
    occupy fixed pixel slots so that, when probability maps are requested,
    the standard instance extraction recovers them exactly.
    """
    if not 0.0 <= recall <= 1.0:
        raise ValueError("recall must be in [0, 1]")
    if fp_rate < 0.0:
        raise ValueError("false positive rate must be non-negative")

    cameras = city.cameras if isinstance(city, SyntheticCity) else list(city)
    by_loc: Dict[Tuple[str, str], List[CameraSite]] = {}
    for cam in cameras:
        by_loc.setdefault((cam.street, cam.side), []).append(cam)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xDE7EC7]))
    detections: List[SimDetection] = []
    true_boxes: Dict[str, List[Tuple[int, int, int, int]]] = {}
    prob_maps: Optional[Dict[str, ProbabilityMap]] = {} if maps else None
    visible_pairs = 0
    hits = 0
    fps = 0

    for point in points:
        image_dets: List[SimDetection] = []
        for cam in by_loc.get((point.road_id, point.side), ()):
            if not camera_visible(point, cam):
                continue
            visible_pairs += 1
            if rng.random() < recall:
                image_dets.append(SimDetection(point.point_id, (0, 0, 0, 0), cam.camera_id))
        if fp_rate > 0.0:
            for _ in range(int(rng.poisson(fp_rate))):
                image_dets.append(SimDetection(point.point_id, (0, 0, 0, 0), None))
        if not image_dets:
            continue
        if len(image_dets) > MAX_DETECTIONS_PER_IMAGE:
            raise ValueError(
                f"{point.point_id}: {len(image_dets)} detections exceed the {MAX_DETECTIONS_PER_IMAGE} box slots"
            )
        for k, det in enumerate(image_dets):
            det.bbox = _slot_box(k)
            if det.camera_id is not None:
                hits += 1
                true_boxes.setdefault(det.image_id, []).append(det.bbox)
            else:
                fps += 1
        detections.extend(image_dets)
        if maps:
            values = np.full((MAP_SIZE, MAP_SIZE), 0.05, dtype=np.float32)
            for det in image_dets:
                x, y, w, h = det.bbox
                values[y : y + h, x : x + w] = 0.9
            prob_maps[point.point_id] = ProbabilityMap(point.point_id, values)

    return SimulationResult(detections, true_boxes, visible_pairs, hits, fps, prob_maps)


def auto_verify(
    detections: Sequence[SimDetection],
    true_boxes: Dict[str, List[Tuple[int, int, int, int]]],
    store_root,
    city: str,
    quorum: int = 1,
) -> int:
    """Push detections through a real verification store with an oracle
    annotator that accepts exactly the camera-backed boxes. Returns the
    verified count for the city."""
    image_ids = sorted({d.image_id for d in detections})
    truth = {i: {tuple(b) for b in true_boxes.get(i, ())} for i in image_ids}
    with VerifyStore(store_root, quorum=quorum, fsync=False) as store:
        store.register_images(
            [SimpleNamespace(image_id=i, point_id=i, city=city, cache_path="<synthetic>") for i in image_ids]
        )
        store.create_tasks(detections)
        annotators = [f"oracle-{j}" for j in range(quorum)]
        for annotator in annotators:
            while True:
                task = store.next_task(annotator)
                if task is None:
                    break
                decisions = [tuple(b) in truth[task.image_id] for b in task.boxes]
                store.submit_verdict(task.task_id, annotator, decisions)
        return store.export_verified().counts.get(city, 0)


@dataclass
class SeedOutcome:
    seed: int
    verified: int
    coverage: float
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    covered: bool


@dataclass
class CalibrationReport:
    true_count: int
    seeds: int
    sample_count: int
    recall: float
    mean_estimate: float
    bias_fraction: float
    sd_estimate: float
    mean_se: float
    ci_coverage: float
    outcomes: List[SeedOutcome] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"true cameras      {self.true_count}",
            f"seeds             {self.seeds}",
            f"images per seed   {self.sample_count}",
            f"simulated recall  {self.recall}",
            f"mean estimate     {self.mean_estimate:.1f}",
            f"bias              {100 * self.bias_fraction:+.2f}%",
            f"sd of estimates   {self.sd_estimate:.1f}",
            f"mean reported se  {self.mean_se:.1f}",
            f"95% CI coverage   {self.ci_coverage:.3f}",
        ]
        return "\n".join(lines) + "\n"


def _calibration_seed_run(city: SyntheticCity, seed: int, sample_count: int, recall: float, fp_rate: float) -> SeedOutcome:
    bundle = city.bundle
    points = sample_points(bundle, sample_count, master_seed=seed)
    captures = [(p.point_id, p.x, p.y) for p in points]
    _records, cov = compute_city_coverage(bundle, captures)
    sim = simulate_detector(city, points, recall, fp_rate=fp_rate, seed=seed)
    with tempfile.TemporaryDirectory() as td:
        n = auto_verify(sim.detections, sim.true_boxes, td, bundle.name, quorum=1)
    est = estimate_city(bundle.name, n, sample_count, cov.coverage, bundle.road_length_km, recall=recall)
    covered = est.ci_low <= city.true_count <= est.ci_high
    return SeedOutcome(seed, n, cov.coverage, est.count, est.se_count, est.ci_low, est.ci_high, covered)


def end_to_end_check(
    rows: int = 7,
    cols: int = 7,
    spacing: float = 150.0,
    setback: float = 8.0,
    camera_count: int = 200,
    sample_count: int = 1500,
    seeds: int = 200,
    recall: float = 0.63,
    fp_rate: float = 0.05,
    master_seed: int = 424242,
    workers: int = 1,
) -> CalibrationReport:
    """Sample, measure coverage, detect, verify, estimate, across seeds.

    One fixed city; each seed redraws the sample and detector noise.
    Reports the mean estimate against the known camera count and how often
    the nominal 95% interval contains it.
    """
    city = generate_city(rows, cols, spacing, setback, 0.0, seed=master_seed, camera_count=camera_count)
    seed_list = [master_seed + 1 + k for k in range(seeds)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        run = partial(_calibration_seed_run, city, sample_count=sample_count, recall=recall, fp_rate=fp_rate)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, seed_list))
    else:
        outcomes = [_calibration_seed_run(city, s, sample_count, recall, fp_rate) for s in seed_list]

    estimates = np.array([o.estimate for o in outcomes])
    ses = np.array([o.se for o in outcomes])
    mean = float(estimates.mean())
    report = CalibrationReport(
        true_count=city.true_count,
        seeds=seeds,
        sample_count=sample_count,
        recall=recall,
        mean_estimate=mean,
        bias_fraction=mean / city.true_count - 1.0,
        sd_estimate=float(estimates.std(ddof=1)) if seeds > 1 else 0.0,
        mean_se=float(ses.mean()),
        ci_coverage=float(np.mean([o.covered for o in outcomes])),
        outcomes=outcomes,
    )
    return report


def write_calibration_csv(report: CalibrationReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("seed,verified,coverage,estimate,se,ci_low,ci_high,covered\n")
        for o in report.outcomes:
            fh.write(
                f"{o.seed},{o.verified},{o.coverage!r},{o.estimate!r},{o.se!r},{o.ci_low!r},{o.ci_high!r},{int(o.covered)}\n"
            )


# -- exporting the city as input files ------------------------------------------


def _feature(geometry: dict, props: dict) -> dict:
    return {"type": "Feature", "geometry": geometry, "properties": props}


def _ring_lonlat(poly: Polygon, origin: GeoPoint) -> list:
    rings = []
    for ring in poly.rings():
        coords = []
        for x, y in ring:
            gp = unproject(LocalPoint(float(x), float(y)), origin)
            coords.append([gp.lon, gp.lat])
        rings.append(coords)
    return rings


def write_city_dir(city: SyntheticCity, out_dir) -> Path:
    """Materialize the city as input files the ingest stage can load."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    origin = city.bundle.origin

    def dump(name: str, features: list) -> None:
        payload = {"type": "FeatureCollection", "features": features}
        (out / name).write_text(json.dumps(payload, sort_keys=True))

    roads = []
    for rid, line in zip(city.bundle.road_ids, city.bundle.network):
        coords = []
        for x, y in line.vertices:
            gp = unproject(LocalPoint(float(x), float(y)), origin)
            coords.append([gp.lon, gp.lat])
        roads.append(_feature({"type": "LineString", "coordinates": coords}, {"id": rid}))
    dump("roads.geojson", roads)

    dump(
        "boundary.geojson",
        [_feature({"type": "Polygon", "coordinates": _ring_lonlat(city.bundle.boundary[0], origin)}, {"name": city.bundle.name})],
    )
    dump(
        "footprints.geojson",
        [
            _feature({"type": "Polygon", "coordinates": _ring_lonlat(fp, origin)}, {"id": f"fp-{k:04d}"})
            for k, fp in enumerate(city.bundle.footprints)
        ],
    )
    dump(
        "parcels.geojson",
        [
            _feature(
                {"type": "Polygon", "coordinates": _ring_lonlat(p.polygon, origin)},
                {"id": p.parcel_id, "zone": p.zone_raw},
            )
            for p in city.bundle.parcels
        ],
    )
    dump(
        "blockgroups.geojson",
        [
            _feature(
                {"type": "Polygon", "coordinates": _ring_lonlat(g.polygon, origin)},
                {"id": g.group_id, "minority_share": g.minority_share},
            )
            for g in city.bundle.blockgroups
        ],
    )
    with open(out / "zones.tsv", "w") as fh:
        fh.write("# raw zoning code -> category\n")
        for zone, code in BLOCK_ZONE_CODES.items():
            fh.write(f"{code}\t{zone}\n")
    with open(out / "cameras.jsonl", "w") as fh:
        for cam in city.cameras:
            fh.write(json.dumps(asdict(cam), sort_keys=True) + "\n")
    (out / "truth.json").write_text(
        json.dumps(
            {
                "camera_count": city.true_count,
                "seed": city.seed,
                "rows": city.rows,
                "cols": city.cols,
                "spacing": city.spacing,
                "setback": city.setback,
                "road_length_km": city.bundle.road_length_km,
                "origin": [origin.lat, origin.lon],
            },
            sort_keys=True,
        )
    )
    return out


def load_planted_cameras(city_dir, bundle) -> List[CameraSite]:
    """Read back planted cameras in the given bundle's local frame.

    The ingest stage centers its projection on the boundary, so a reloaded
    city does not share the generator's frame; camera coordinates are
    carried over through their geographic positions.
    """
    base = Path(city_dir)
    truth = json.loads((base / "truth.json").read_text())
    source = GeoPoint(*truth["origin"])
    cameras = []
    for line in (base / "cameras.jsonl").read_text().splitlines():
        d = json.loads(line)
        spot = project(unproject(LocalPoint(d["x"], d["y"]), source), bundle.origin)
        cameras.append(CameraSite(d["camera_id"], d["street"], d["u"], d["side"], spot.x, spot.y))
    return cameras
