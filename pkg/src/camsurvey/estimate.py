"""Scaling detection counts up to city-wide camera totals.

With n confirmed detections out of N sampled images, coverage fraction c,
and verified detector recall r, the estimated camera count is

    K = n / (c * r)

The detection count is binomial, so with p = n / N its standard error is
sqrt(N * p * (1 - p)), which scales through the same factor:

    se(K) = sqrt(N * p * (1 - p)) / (c * r)

Density is cameras per km of road, K / D. Intervals are plus or minus
1.96 standard errors. Raw values are exact; rounding happens only when a
table is rendered for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import List, Sequence

Z_95 = 1.96


@dataclass
class CityEstimate:
    city: str
    region: str
    n_detections: int
    n_images: int
    coverage: float
    recall: float
    road_length_km: float
    count: float
    se_count: float
    density: float
    se_density: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_city(
    city: str,
    n_detections: int,
    n_images: int,
    coverage: float,
    road_length_km: float,
    recall: float = 0.63,
    region: str = "",
) -> CityEstimate:
    if n_images < 1:
        raise ValueError(f"{city}: need at least one sampled image, got {n_images}")
    if not 0 <= n_detections <= n_images:
        raise ValueError(f"{city}: detection count {n_detections} outside [0, {n_images}]")
    scale = coverage * recall
    if not scale > 0:
        raise ValueError(f"{city}: coverage * recall must be positive, got {coverage!r} * {recall!r}")
    if road_length_km <= 0:
        raise ValueError(f"{city}: road length must be positive")

    p = n_detections / n_images
    count = n_detections / scale
    se_count = math.sqrt(n_images * p * (1.0 - p)) / scale
    density = count / road_length_km
    se_density = se_count / road_length_km
    return CityEstimate(
        city=city,
        region=region,
        n_detections=n_detections,
        n_images=n_images,
        coverage=coverage,
        recall=recall,
        road_length_km=road_length_km,
        count=count,
        se_count=se_count,
        density=density,
        se_density=se_density,
        ci_low=count - Z_95 * se_count,
        ci_high=count + Z_95 * se_count,
    )


def estimate_all(rows: Sequence[dict]) -> List[CityEstimate]:
    """Estimate every city and order the result for reporting.

    Rows are dicts with the estimate_city keyword arguments. Output is
    grouped by region in first-appearance order, densest city first
    within each group.
    """
    estimates = [estimate_city(**row) for row in rows]
    region_order = {}
    for e in estimates:
        region_order.setdefault(e.region, len(region_order))
    return sorted(estimates, key=lambda e: (region_order[e.region], -e.density, e.city))


def round_to(value: float, step: float) -> float:
    return round(value / step) * step


def render_table(estimates: Sequence[CityEstimate]) -> str:
    """Readable summary with display rounding.

    Densities to two decimals, counts to the nearest 100, count errors to
    the nearest 50. Everything upstream stays unrounded.
    """
    header = f"{'city':<16}{'road km':>9}{'images':>8}{'hits':>6}{'density (se)':>15}{'count (se)':>16}"
    lines = [header, "-" * len(header)]
    last_region = None
    for e in estimates:
        if e.region != last_region:
            if e.region:
                lines.append(f"[{e.region}]")
            last_region = e.region
        density = f"{e.density:.2f} ({e.se_density:.2f})"
        count = f"{round_to(e.count, 100):.0f} ({round_to(e.se_count, 50):.0f})"
        lines.append(
            f"{e.city:<16}{e.road_length_km:>9.0f}{e.n_images:>8}{e.n_detections:>6}{density:>15}{count:>16}"
        )
    return "\n".join(lines) + "\n"


CSV_FIELDS = [
    "city",
    "region",
    "n_detections",
    "n_images",
    "coverage",
    "recall",
    "road_length_km",
    "count",
    "se_count",
    "density",
    "se_density",
    "ci_low",
    "ci_high",
]


def write_estimates_csv(estimates: Sequence[CityEstimate], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_FIELDS) + "\n")
        for e in estimates:
            row = e.to_dict()
            fh.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in CSV_FIELDS) + "\n")


def read_estimates_csv(path) -> List[CityEstimate]:
    out = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != ",".join(CSV_FIELDS):
            raise ValueError(f"{path}: not an estimates file")
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            kwargs = {}
            for key, raw in zip(CSV_FIELDS, parts):
                if key in ("city", "region"):
                    kwargs[key] = raw
                elif key in ("n_detections", "n_images"):
                    kwargs[key] = int(raw)
                else:
                    kwargs[key] = float(raw)
            out.append(CityEstimate(**kwargs))
    return out
