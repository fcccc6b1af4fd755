"""
City table replay
=================

Re-derives the per-city camera densities and counts from raw ingredients:
verified detections n out of N = 100,000 sampled images, the mean image
coverage width, the road network length, and detector recall 0.63.

Everything downstream of the field work is four multiplications, so the
whole table falls out in milliseconds.
"""

from camsurvey.coverage import coverage_fraction
from camsurvey.estimate import estimate_all, render_table

N_IMAGES = 100_000
RECALL = 0.63

# city, region, road km, mean width m, verified detections
CITIES = [
    ("boston", "us", 2589, 26, 516),
    ("new york", "us", 16362, 29, 556),
    ("baltimore", "us", 3746, 30, 512),
    ("san francisco", "us", 3101, 24, 398),
    ("chicago", "us", 10449, 30, 382),
    ("philadelphia", "us", 6759, 29, 348),
    ("washington", "us", 3262, 33, 237),
    ("milwaukee", "us", 4899, 33, 202),
    ("seattle", "us", 5569, 29, 155),
    ("los angeles", "us", 21095, 29, 144),
    ("seoul", "international", 14748, 29, 869),
    ("paris", "international", 1853, 24, 590),
    ("tokyo", "international", 46688, 29, 428),
    ("london", "international", 28907, 32, 448),
    ("bangkok", "international", 34692, 29, 324),
    ("singapore", "international", 5794, 29, 172),
]

rows = [
    {
        "city": city,
        "region": region,
        "n_detections": n,
        "n_images": N_IMAGES,
        "coverage": coverage_fraction(N_IMAGES, width, road_km),
        "road_length_km": road_km,
        "recall": RECALL,
    }
    for city, region, road_km, width, n in CITIES
]

estimates = estimate_all(rows)
print(render_table(estimates))

# The same numbers, unrounded, for one city end to end:
sf = next(e for e in estimates if e.city == "san francisco")
print("san francisco, spelled out:")
print(f"  coverage fraction  c = {sf.coverage:.6f}")
print(f"  effective fraction c*r = {sf.coverage * sf.recall:.6f}")
print(f"  count              n/(c*r) = {sf.count:.2f}  (se {sf.se_count:.2f})")
print(f"  density            {sf.density:.4f} per km  (se {sf.se_density:.4f})")
print(f"  95% interval       [{sf.ci_low:.1f}, {sf.ci_high:.1f}] cameras")
