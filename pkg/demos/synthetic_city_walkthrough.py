"""
Planted-camera walkthrough on a synthetic street grid
=====================================================

Builds a small gridded city with a known number of planted cameras, then runs
the whole estimation loop once:

    generate -> sample capture points -> coverage widths
             -> simulated detector -> quorum verification -> estimate

The point of the synthetic city is that the right answer is known, so the
final interval can be judged against it. One seed is a single draw; the
replicated version (200 seeds, bias and interval coverage) is

    camsurvey synth-validate --out-dir runs/calibration
"""

import tempfile
from pathlib import Path

from camsurvey.coverage import compute_city_coverage
from camsurvey.estimate import estimate_city
from camsurvey.sampler import sample_points
from camsurvey.synth import auto_verify, generate_city, simulate_detector

# PART I: a city with ground truth.
#
# 6x6 blocks of 150 m with building facades set back 8 m from the street
# centerlines, and exactly 150 cameras mounted on those facades.

city = generate_city(rows=6, cols=6, spacing=150.0, setback=8.0,
                     camera_density_per_km=0.0, seed=5, camera_count=150)
bundle = city.bundle
print(f"streets        {len(bundle.network)} segments, {bundle.road_length_km:.1f} km")
print(f"footprints     {len(bundle.footprints)}")
print(f"planted        {city.true_count} cameras")

# PART II: capture points, uniform on street length.

points = sample_points(bundle, 1500, master_seed=99)
print(f"sampled        {len(points)} capture points")

# PART III: how much street does the sample see?
#
# Each image covers a strip as deep as twice the distance to the nearest
# facade. The per-city coverage fraction compares the summed strips to both
# sides of every street.

captures = [(p.point_id, p.x, p.y) for p in points]
records, cov = compute_city_coverage(bundle, captures)
print(f"mean width     {cov.mean_width_m:.2f} m per image")
print(f"coverage       {100 * cov.coverage:.2f}% of street sides")

# PART IV: a detector with known error rates.
#
# Recall 0.63 (the operating point used throughout), plus Poisson false
# positives at 0.05 per image so the verification stage has something to do.

sim = simulate_detector(city, points, recall=0.63, fp_rate=0.05, seed=7)
print(f"detections     {len(sim.detections)} "
      f"({sim.true_detections} real, {sim.false_positives} false)")

# PART V: quorum verification.
#
# Three oracle annotators accept exactly the true boxes, so every false
# positive dies here. With humans the store enforces the same mechanics:
# one verdict per annotator per task, majority of 3 per box.

with tempfile.TemporaryDirectory() as tmp:
    verified = auto_verify(sim.detections, sim.true_boxes,
                           Path(tmp) / "store", bundle.name, quorum=3)
print(f"verified       {verified} detections survive review")

# PART VI: the estimate.

est = estimate_city(bundle.name, verified, len(points), cov.coverage,
                    bundle.road_length_km, recall=0.63)
print()
print(f"estimate       {est.count:.1f} cameras (se {est.se_count:.1f})")
print(f"95% interval   [{est.ci_low:.1f}, {est.ci_high:.1f}]")
print(f"truth          {city.true_count} -> "
      f"{'inside' if est.ci_low <= city.true_count <= est.ci_high else 'outside'} the interval")
