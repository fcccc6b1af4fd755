"""Where cameras turn up: spatial joins and the detection-rate model.

Each sampled point is tagged with the zoning category of its closest parcel
and the minority share of the census block group containing it. Zone-level
identification rates come with Wald intervals; a linear probability model
regresses the per-image detection indicator on city, zone, and minority
share (with a squared term), using classical standard errors.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .geo import Polygon, SpatialIndex, distance_point_to_polygon, point_in_polygon
from .ingest import ZONE_CATEGORIES

log = logging.getLogger(__name__)

ZONE_HORIZON_M = 120.0
DEMOGRAPHICS_FALLBACK_M = 100.0

# dummy-coded zone columns; residential is the reference level
ZONE_DUMMIES = ("mixed", "industrial", "commercial", "public")


@dataclass
class AnalysisRow:
    point_id: str
    city: str
    detected: int
    zone: str
    minority_share: Optional[float]

    def __post_init__(self):
        if self.detected not in (0, 1):
            raise ValueError(f"{self.point_id}: detected must be 0 or 1, got {self.detected!r}")
        if self.zone not in ZONE_CATEGORIES:
            raise ValueError(f"{self.point_id}: unknown zone category {self.zone!r}")
        if self.minority_share is not None and not 0.0 <= self.minority_share <= 1.0:
            raise ValueError(f"{self.point_id}: minority share {self.minority_share!r} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AnalysisRow":
        return cls(**json.loads(line))


def write_rows(rows: Sequence[AnalysisRow], path) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(r.to_json() + "\n")


def read_rows(path) -> List[AnalysisRow]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(AnalysisRow.from_json(line))
    return out


class PolygonIndex:
    """Grid-accelerated nearest / containing lookups over id'd polygons."""

    def __init__(self, ids: Sequence[str], polygons: Sequence[Polygon], cell_size: float = 100.0):
        if len(ids) != len(polygons):
            raise ValueError("ids and polygons must align")
        self.ids = list(ids)
        self.polygons = list(polygons)
        self.index = SpatialIndex(cell_size=cell_size)
        for i, poly in enumerate(self.polygons):
            self.index.insert(i, poly.bbox())

    def nearest(self, x: float, y: float, horizon: float) -> Optional[int]:
        """Ordinal of the closest polygon within horizon; ties to smallest id."""
        radius = min(25.0, horizon)
        while True:
            best = None
            for i in self.index.query((x, y), radius):
                d = distance_point_to_polygon((x, y), self.polygons[i])
                key = (d, self.ids[i])
                if best is None or key < best[0]:
                    best = (key, i)
            if best is not None and best[0][0] <= radius:
                return best[1]
            if radius >= horizon:
                if best is not None and best[0][0] <= horizon:
                    return best[1]
                return None
            radius = min(radius * 4.0, horizon)

    def containing(self, x: float, y: float) -> Optional[int]:
        """Ordinal of a polygon containing the point; ties to smallest id."""
        best = None
        for i in self.index.query((x, y), 0.0):
            if point_in_polygon((x, y), self.polygons[i]):
                if best is None or self.ids[i] < self.ids[best]:
                    best = i
        return best


def assign_zone(x: float, y: float, parcels: PolygonIndex, zones: Sequence[str],
                horizon_m: float = ZONE_HORIZON_M) -> str:
    """Zone of the closest parcel, or unknown when none is within the horizon."""
    i = parcels.nearest(x, y, horizon_m)
    return "unknown" if i is None else zones[i]


def assign_demographics(x: float, y: float, blockgroups: PolygonIndex, shares: Sequence[float],
                        fallback_m: float = DEMOGRAPHICS_FALLBACK_M) -> Optional[float]:
    """Minority share of the containing block group.

    Points outside every polygon (rivers, coastline slivers) borrow the
    nearest group within the fallback distance; beyond that the value is
    missing and the row drops out of demographic analyses.
    """
    i = blockgroups.containing(x, y)
    if i is None:
        i = blockgroups.nearest(x, y, fallback_m)
    return None if i is None else shares[i]


def build_rows(bundle, points, detected_ids, horizon_m: float = ZONE_HORIZON_M) -> List[AnalysisRow]:
    """Join sampled points against the bundle's parcels and block groups.

    points carry (point_id, x, y); detected_ids is the set of point ids whose
    image has at least one verified camera.
    """
    parcel_index = zone_list = None
    if bundle.parcels:
        parcel_index = PolygonIndex([p.parcel_id for p in bundle.parcels], [p.polygon for p in bundle.parcels])
        zone_list = [p.zone for p in bundle.parcels]
    group_index = share_list = None
    if bundle.blockgroups:
        group_index = PolygonIndex([g.group_id for g in bundle.blockgroups], [g.polygon for g in bundle.blockgroups])
        share_list = [g.minority_share for g in bundle.blockgroups]

    rows = []
    missing = 0
    for pid, x, y in points:
        zone = "unknown" if parcel_index is None else assign_zone(x, y, parcel_index, zone_list, horizon_m)
        share = None if group_index is None else assign_demographics(x, y, group_index, share_list)
        if share is None:
            missing += 1
        rows.append(AnalysisRow(pid, bundle.name, int(pid in detected_ids), zone, share))
    if missing:
        log.info("%s: %d of %d points have no demographic match", bundle.name, missing, len(points))
    return rows


@dataclass
class ZoneRate:
    zone: str
    images: int
    detections: int
    rate: float
    ci_low: float
    ci_high: float


def zone_rates(rows: Sequence[AnalysisRow]) -> List[ZoneRate]:
    """Per-zone identification rate with a Wald 95% interval.

    Unknown-zone rows are omitted. Order follows the category table.
    """
    if not rows:
        raise ValueError("no rows to summarize")
    counts: Dict[str, List[int]] = {}
    for r in rows:
        if r.zone == "unknown":
            continue
        tally = counts.setdefault(r.zone, [0, 0])
        tally[0] += 1
        tally[1] += r.detected
    out = []
    for zone in ZONE_CATEGORIES:
        if zone not in counts:
            continue
        images, hits = counts[zone]
        rate = hits / images
        half = 1.96 * math.sqrt(rate * (1.0 - rate) / images)
        out.append(ZoneRate(zone, images, hits, rate, rate - half, rate + half))
    return out


def write_zone_rates_csv(rates: Sequence[ZoneRate], path) -> None:
    with open(path, "w") as fh:
        fh.write("zone,images,detections,rate,ci_low,ci_high\n")
        for r in rates:
            fh.write(f"{r.zone},{r.images},{r.detections},{r.rate!r},{r.ci_low!r},{r.ci_high!r}\n")


@dataclass
class RegressionResult:
    names: List[str]
    coef: np.ndarray
    se: np.ndarray
    n_obs: int
    sigma2: float
    dof: int

    def p_values(self) -> np.ndarray:
        safe = np.where(self.se > 0, self.se, 1.0)
        t = np.where(self.se > 0, self.coef / safe, np.where(self.coef == 0, 0.0, np.inf))
        return 2.0 * stats.t.sf(np.abs(t), self.dof)


def ols(x: np.ndarray, y: np.ndarray, names: Sequence[str]) -> RegressionResult:
    """Least squares through a QR factorization, with classical errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if len(names) != p:
        raise ValueError("one name per design column")
    if n <= p:
        raise ValueError(f"need more than {p} rows to fit {p} coefficients, got {n}")

    # pivoted QR exposes which columns are linear combinations of the others
    _q, r, piv = sla.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size and diag[0] > 0 else 1.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        bad = sorted(names[j] for j in piv[rank:])
        raise ValueError("design matrix is rank deficient; collinear columns: " + ", ".join(bad))

    q, r = np.linalg.qr(x)
    coef = sla.solve_triangular(r, q.T @ y)
    resid = y - x @ coef
    rss = float(resid @ resid)
    dof = n - p
    sigma2 = rss / dof
    rinv = sla.solve_triangular(r, np.eye(p))
    xtx_inv_diag = np.sum(rinv * rinv, axis=1)
    se = np.sqrt(sigma2 * xtx_inv_diag)
    return RegressionResult(list(names), coef, se, n, sigma2, dof)


def lpm_design(rows: Sequence[AnalysisRow]) -> Tuple[np.ndarray, np.ndarray, List[str], List[AnalysisRow]]:
    """Design matrix for the linear probability model.

    One indicator per city (no separate intercept), zone dummies against a
    residential reference, then minority share and its square. Rows with an
    unknown zone or missing demographics are left out.
    """
    usable = [r for r in rows if r.zone != "unknown" and r.minority_share is not None]
    if not usable:
        raise ValueError("no usable rows: every row lacks a zone or demographics")
    cities = sorted({r.city for r in usable})
    names = [f"city={c}" for c in cities] + [f"zone={z}" for z in ZONE_DUMMIES] + ["minority", "minority^2"]
    x = np.zeros((len(usable), len(names)))
    y = np.empty(len(usable))
    city_col = {c: i for i, c in enumerate(cities)}
    zone_col = {z: len(cities) + i for i, z in enumerate(ZONE_DUMMIES)}
    for i, r in enumerate(usable):
        x[i, city_col[r.city]] = 1.0
        if r.zone in zone_col:
            x[i, zone_col[r.zone]] = 1.0
        x[i, -2] = r.minority_share
        x[i, -1] = r.minority_share * r.minority_share
        y[i] = r.detected
    return x, y, names, usable


def fit_lpm(rows: Sequence[AnalysisRow]) -> RegressionResult:
    x, y, names, usable = lpm_design(rows)
    if len(usable) < len(rows):
        log.info("regression uses %d of %d rows", len(usable), len(rows))
    return ols(x, y, names)


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


_REPORT_LABELS = {"minority": "Minority share", "minority^2": "Minority share sq."}


def _label(name: str) -> str:
    if name.startswith("city="):
        return name[5:].replace("_", " ").title()
    if name.startswith("zone="):
        return name[5:].capitalize()
    return _REPORT_LABELS.get(name, name)


def render_regression(result: RegressionResult) -> str:
    """Fixed-width coefficient table: label, estimate, (se), stars."""
    lines = [f"{'':<24}{'coefficient':>14}{'se':>12}", "-" * 50]
    for name, b, s, p in zip(result.names, result.coef, result.se, result.p_values()):
        lines.append(f"{_label(name):<24}{b:>14.4f}  ({s:.4f}){_stars(p)}")
    lines.append("-" * 50)
    lines.append(f"observations {result.n_obs}; residual variance {result.sigma2:.6g}")
    lines.append("classical standard errors; * p<0.1 ** p<0.05 *** p<0.01")
    return "\n".join(lines) + "\n"


@dataclass
class RateCurve:
    bin_edges: np.ndarray
    bin_centers: np.ndarray
    bin_rates: np.ndarray  # NaN for empty bins
    bin_counts: np.ndarray
    coef: np.ndarray  # intercept, share, share^2
    coef_se: np.ndarray
    grid: np.ndarray
    fitted: np.ndarray


def minority_rate_curve(rows: Sequence[AnalysisRow], bins: int = 10, grid_points: int = 101) -> RateCurve:
    """Detection rate by minority-share bin plus a quadratic fit overlay."""
    usable = [r for r in rows if r.minority_share is not None]
    if not usable:
        raise ValueError("no rows with demographics")
    if bins < 1:
        raise ValueError("need at least one bin")
    share = np.array([r.minority_share for r in usable])
    hit = np.array([float(r.detected) for r in usable])

    edges = np.linspace(0.0, 1.0, bins + 1)
    which = np.minimum(np.searchsorted(edges, share, side="right") - 1, bins - 1)
    counts = np.bincount(which, minlength=bins)
    sums = np.bincount(which, weights=hit, minlength=bins)
    with np.errstate(invalid="ignore"):
        rates = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    x = np.column_stack([np.ones_like(share), share, share * share])
    fit = ols(x, hit, ["intercept", "share", "share^2"])
    grid = np.linspace(0.0, 1.0, grid_points)
    fitted = fit.coef[0] + fit.coef[1] * grid + fit.coef[2] * grid * grid
    return RateCurve(edges, (edges[:-1] + edges[1:]) / 2.0, rates, counts, fit.coef, fit.se, grid, fitted)


def write_curve_csv(curve: RateCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write("bin_center,rate,images\n")
        for c, r, n in zip(curve.bin_centers, curve.bin_rates, curve.bin_counts):
            rate = "" if math.isnan(r) else repr(float(r))
            fh.write(f"{float(c)!r},{rate},{int(n)}\n")
        fh.write("# quadratic fit: " + " ".join(repr(float(b)) for b in curve.coef) + "\n")
