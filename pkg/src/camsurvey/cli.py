"""Command line entry point wiring the pipeline stages together.

Every stage reads and writes plain files, so any step can be rerun or
swapped out. Configuration resolves as flags > config file > defaults,
and each run drops a manifest (config hash, input and output hashes,
package version) beside its outputs so a rerun can be checked for
byte-identical results.

Exit codes: 0 success, 1 usage, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .ingest import CityBundle, load_city, load_zone_table

log = logging.getLogger("camsurvey.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- configuration plumbing ------------------------------------------------------

_CONFIG_DEFAULTS = PipelineConfig()


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration overrides")
    group.add_argument("--config", metavar="FILE", default=None, help="key = value config file")
    for field in dataclasses.fields(PipelineConfig):
        flag = "--" + field.name.replace("_", "-")
        kind = type(getattr(_CONFIG_DEFAULTS, field.name))
        group.add_argument(flag, dest=field.name, type=kind, default=None, metavar=kind.__name__.upper())
    return parent


def resolve_config(args) -> PipelineConfig:
    base = PipelineConfig.from_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(PipelineConfig)
        if getattr(args, f.name, None) is not None
    }
    return base.merged(overrides)


# -- manifests -------------------------------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dir_sha256(path, pattern: str = "*") -> dict:
    """One digest over a directory: sha256 of 'name:filehash' lines, sorted."""
    files = sorted(p for p in Path(path).rglob(pattern) if p.is_file())
    h = hashlib.sha256()
    for p in files:
        h.update(f"{p.relative_to(path)}:{file_sha256(p)}\n".encode())
    return {"path": str(path), "files": len(files), "sha256": h.hexdigest()}


def _entry(path) -> dict:
    path = Path(path)
    if path.is_dir():
        return dir_sha256(path)
    return {"path": str(path), "sha256": file_sha256(path)}


def write_manifest(stage: str, anchor, config: PipelineConfig, inputs: dict, outputs: dict) -> Path:
    """Drop <anchor>.manifest.json (or manifest.json inside a directory)."""
    anchor = Path(anchor)
    target = anchor / "manifest.json" if anchor.is_dir() else anchor.with_name(anchor.name + ".manifest.json")
    payload = {
        "stage": stage,
        "tool": {"package": "camsurvey", "version": __version__},
        "config_sha256": config.sha256(),
        "inputs": {name: _entry(p) for name, p in sorted(inputs.items()) if p is not None},
        "outputs": {name: _entry(p) for name, p in sorted(outputs.items())},
    }
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return target


# -- stages ----------------------------------------------------------------------

CITY_DIR_FILES = {
    "roads": "roads.geojson",
    "boundary": "boundary.geojson",
    "footprints": "footprints.geojson",
    "parcels": "parcels.geojson",
    "blockgroups": "blockgroups.geojson",
    "zone_table": "zones.tsv",
}


def _city_dir_paths(args) -> None:
    """Fill unset per-layer paths from a conventional city directory."""
    base = Path(args.city_dir)
    for attr, name in CITY_DIR_FILES.items():
        if getattr(args, attr, None) is None and (base / name).exists():
            setattr(args, attr, base / name)


def cmd_ingest(args) -> int:
    config = resolve_config(args)
    if args.city_dir:
        _city_dir_paths(args)
    if not args.roads or not args.boundary:
        raise ValueError("ingest needs --roads and --boundary (or a --city-dir providing them)")
    table = load_zone_table(args.zone_table) if args.zone_table else None
    bundle = load_city(
        args.city,
        args.roads,
        args.boundary,
        footprints_path=args.footprints,
        parcels_path=args.parcels,
        blockgroups_path=args.blockgroups,
        zone_table=table,
    )
    bundle.save(args.out)
    inputs = {k: getattr(args, k) for k in CITY_DIR_FILES}
    write_manifest("ingest", args.out, config, inputs, {"bundle": args.out})
    print(
        f"{bundle.name}: {len(bundle.network)} roads ({bundle.road_length_km:.1f} km), "
        f"{len(bundle.footprints or [])} footprints, {len(bundle.parcels or [])} parcels, "
        f"{len(bundle.blockgroups or [])} block groups -> {args.out}"
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    from .sampler import sample_points, write_points

    config = resolve_config(args)
    bundle = CityBundle.load(args.bundle)
    points = sample_points(bundle, config.sample_count, master_seed=config.seed)
    write_points(points, args.out)
    write_manifest("sample", args.out, config, {"bundle": args.bundle}, {"points": args.out})
    print(f"{bundle.name}: {len(points)} points on {bundle.road_length_km:.1f} km -> {args.out}")
    return EXIT_OK


def cmd_fetch(args) -> int:
    from .imagery import ImageryClient, write_image_records
    from .sampler import apply_availability, read_points, write_points

    config = resolve_config(args)
    if not config.endpoint:
        raise ValueError("fetch needs an imagery endpoint (--endpoint or config file)")
    bundle = CityBundle.load(args.bundle)
    points = read_points(args.points)
    client = ImageryClient(
        endpoint=config.endpoint,
        api_key=config.api_key,
        date_policy=config.date_policy,
        date_min_year=config.date_min_year,
        date_max_year=config.date_max_year,
        availability_radius_m=config.availability_radius_m,
        rate_limit_rps=config.rate_limit_rps,
        image_size_px=config.image_size_px,
        fov_deg=config.fov_deg,
        cache_dir=args.cache,
    )
    kept, stats = apply_availability(
        bundle, points, lambda p: client.check_availability(p.lat, p.lon)[0], master_seed=config.seed
    )
    records = client.fetch_many(kept, workers=args.jobs)
    write_points(kept, args.out_points)
    write_image_records(records, args.out)
    write_manifest(
        "fetch",
        args.out,
        config,
        {"bundle": args.bundle, "points": args.points},
        {"images": args.out, "points": args.out_points},
    )
    print(
        f"{bundle.name}: {len(records)} images ({stats['rejected']} draws rejected, "
        f"availability {stats['availability_rate']:.1%}) -> {args.out}"
    )
    return EXIT_OK


def cmd_detect_import(args) -> int:
    from .detect import extract_instances, read_probability_map, write_detections

    config = resolve_config(args)
    paths = sorted(Path(args.maps).glob(args.pattern))
    if not paths:
        raise ValueError(f"no probability maps matching {args.pattern!r} under {args.maps}")
    instances = []
    positives = 0
    for path in paths:
        pmap = read_probability_map(path)
        found = extract_instances(pmap, config.prob_threshold, config.size_threshold)
        instances.extend(found)
        positives += bool(found)
    write_detections(instances, args.out)
    write_manifest("detect-import", args.out, config, {"maps": Path(args.maps)}, {"detections": args.out})
    print(
        f"{len(paths)} maps -> {len(instances)} instances on {positives} images "
        f"(threshold {config.prob_threshold}, min size {config.size_threshold}) -> {args.out}"
    )
    return EXIT_OK


def _store_import(store, args) -> None:
    from .detect import read_detections
    from .imagery import read_image_records

    if args.images:
        added = store.register_images(read_image_records(args.images))
        print(f"registered {added} new images from {args.images}")
    if args.detections:
        created = store.create_tasks(read_detections(args.detections))
        print(f"created {created} new tasks from {args.detections}")


def cmd_serve(args) -> int:
    from .verify import VerifyService, VerifyStore

    config = resolve_config(args)
    with VerifyStore(args.store, quorum=config.quorum) as store:
        _store_import(store, args)
        if args.import_only:
            store.snapshot()
            write_manifest(
                "serve-import",
                Path(args.store),
                config,
                {"images": args.images, "detections": args.detections},
                {"store": Path(args.store)},
            )
            return EXIT_OK
        service = VerifyService(store, host=args.host, port=args.port, ui_dir=args.ui)
        service.start()
        print(f"verification service on {service.url} (store {args.store}, quorum {config.quorum})")
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
        finally:
            service.stop()
    return EXIT_OK


def cmd_export(args) -> int:
    from .verify import VerifyStore

    config = resolve_config(args)
    with VerifyStore(args.store, quorum=config.quorum) as store:
        result = store.export_verified()
    payload = {
        "counts": result.counts,
        "complete_tasks": result.complete_tasks,
        "incomplete_tasks": result.incomplete_tasks,
        "detections": [
            {
                "image_id": d.image_id,
                "city": d.city,
                "box": list(d.box),
                "accepts": d.accepts,
                "verified": d.verified,
            }
            for d in result.detections
        ],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_manifest("export", args.out, config, {"store": Path(args.store)}, {"verified": args.out})
    for city, count in result.counts.items():
        print(f"{city}: {count} verified detections")
    if result.incomplete_tasks:
        print(f"note: {result.incomplete_tasks} tasks still open")
    return EXIT_OK


def cmd_coverage(args) -> int:
    from .coverage import compute_city_coverage, write_city_coverage_csv
    from .sampler import read_points

    config = resolve_config(args)
    bundle = CityBundle.load(args.bundle)
    points = read_points(args.points)
    records, summary = compute_city_coverage(
        bundle,
        [(p.point_id, p.x, p.y) for p in points],
        cutoff_m=config.coverage_cutoff_m,
        horizon_m=config.coverage_horizon_m,
        imputed_width_m=config.imputed_road_width_m,
    )
    write_city_coverage_csv([summary], args.out)
    outputs = {"coverage": args.out}
    if args.per_image:
        with open(args.per_image, "w") as fh:
            for rec in records:
                fh.write(rec.to_json() + "\n")
        outputs["per_image"] = args.per_image
    write_manifest("coverage", args.out, config, {"bundle": args.bundle, "points": args.points}, outputs)
    source = "imputed" if summary.imputed else f"measured over {summary.n_images} images"
    print(
        f"{bundle.name}: coverage {summary.coverage:.4f} "
        f"(mean width {summary.mean_width_m:.2f} m, {source}) -> {args.out}"
    )
    return EXIT_OK


def _verified_counts(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if "counts" not in payload:
        raise ValueError(f"{path}: not a verified-export file (missing 'counts')")
    return payload["counts"]


def _rows_from_csv(path, recall: float) -> list:
    from .coverage import coverage_fraction

    header = "city,region,n_detections,n_images,mean_width_m,road_length_km"
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise ValueError(f"{path}: expected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns")
            city, region, n_det, n_img, width, length = parts
            rows.append(
                {
                    "city": city,
                    "region": region,
                    "n_detections": int(n_det),
                    "n_images": int(n_img),
                    "coverage": coverage_fraction(int(n_img), float(width), float(length)),
                    "road_length_km": float(length),
                    "recall": recall,
                }
            )
    return rows


def cmd_estimate(args) -> int:
    from .coverage import read_city_coverage_csv
    from .estimate import estimate_all, render_table, write_estimates_csv

    config = resolve_config(args)
    inputs = {}
    if args.rows:
        rows = _rows_from_csv(args.rows, config.recall)
        inputs["rows"] = args.rows
    else:
        if not (args.coverage and args.verified):
            raise ValueError("estimate needs either --rows or both --coverage and --verified")
        counts = _verified_counts(args.verified)
        rows = []
        for cov in read_city_coverage_csv(args.coverage):
            rows.append(
                {
                    "city": cov.city,
                    "region": args.region,
                    "n_detections": int(counts.get(cov.city, 0)),
                    "n_images": cov.n_images,
                    "coverage": cov.coverage,
                    "road_length_km": cov.road_length_km,
                    "recall": config.recall,
                }
            )
        inputs = {"coverage": args.coverage, "verified": args.verified}
    estimates = estimate_all(rows)
    write_estimates_csv(estimates, args.out)
    table = render_table(estimates)
    outputs = {"estimates": args.out}
    if args.table:
        Path(args.table).write_text(table)
        outputs["table"] = args.table
    write_manifest("estimate", args.out, config, inputs, outputs)
    print(table, end="")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analysis import (
        build_rows,
        fit_lpm,
        minority_rate_curve,
        render_regression,
        write_curve_csv,
        write_rows,
        write_zone_rates_csv,
        zone_rates,
    )
    from .sampler import read_points

    config = resolve_config(args)
    bundle = CityBundle.load(args.bundle)
    points = read_points(args.points)
    payload = json.loads(Path(args.verified).read_text())
    verified_images = {d["image_id"] for d in payload.get("detections", ()) if d["verified"]}
    if args.images:
        from .imagery import read_image_records

        by_image = {r.image_id: r.point_id for r in read_image_records(args.images)}
        detected = {by_image[i] for i in verified_images if i in by_image}
    else:
        detected = verified_images  # synthetic runs name images after points
    rows = build_rows(bundle, [(p.point_id, p.x, p.y) for p in points], detected)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(rows, out_dir / "rows.jsonl")
    rates = zone_rates(rows)
    write_zone_rates_csv(rates, out_dir / "zone_rates.csv")
    for r in rates:
        print(f"{r.zone:<12} {r.detections:>6}/{r.images:<7} rate {r.rate:.4f} [{r.ci_low:.4f}, {r.ci_high:.4f}]")
    outputs = {"rows": out_dir / "rows.jsonl", "zone_rates": out_dir / "zone_rates.csv"}
    try:
        fit = fit_lpm(rows)
    except ValueError as exc:
        print(f"regression skipped: {exc}")
    else:
        report = render_regression(fit)
        (out_dir / "regression.txt").write_text(report)
        outputs["regression"] = out_dir / "regression.txt"
        print(report, end="")
        curve = minority_rate_curve(rows)
        write_curve_csv(curve, out_dir / "curve.csv")
        outputs["curve"] = out_dir / "curve.csv"
    write_manifest(
        "analyze",
        out_dir,
        config,
        {"bundle": args.bundle, "points": args.points, "verified": args.verified, "images": args.images},
        outputs,
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import generate_city, write_city_dir

    config = resolve_config(args)
    city = generate_city(
        args.rows,
        args.cols,
        args.spacing,
        args.setback,
        args.density,
        seed=config.seed,
        camera_count=args.camera_count,
        name=args.name,
    )
    out = write_city_dir(city, args.out)
    write_manifest("synth", out, config, {}, {"city_dir": out})
    print(
        f"{args.name}: {city.rows}x{city.cols} blocks, {city.bundle.road_length_km:.2f} km, "
        f"{city.true_count} cameras (seed {config.seed}) -> {out}"
    )
    return EXIT_OK


def cmd_synth_validate(args) -> int:
    from .synth import end_to_end_check, write_calibration_csv

    config = resolve_config(args)
    per_seed_images = args.sample_count if args.sample_count is not None else 1500
    report = end_to_end_check(
        rows=args.rows,
        cols=args.cols,
        spacing=args.spacing,
        setback=args.setback,
        camera_count=args.camera_count,
        sample_count=per_seed_images,
        seeds=args.seeds,
        recall=config.recall,
        fp_rate=args.fp_rate,
        master_seed=config.seed,
        workers=args.jobs,
    )
    print(report.to_text(), end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.txt").write_text(report.to_text())
        write_calibration_csv(report, out / "calibration.csv")
        write_manifest(
            "synth-validate",
            out,
            config,
            {},
            {"report": out / "calibration.txt", "per_seed": out / "calibration.csv"},
        )
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """Chain the stages end to end over one city's prepared inputs."""
    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    done = []

    def ran(stage):
        done.append(stage)
        print(f"[pipeline] {stage} done")

    try:
        bundle_path = args.bundle
        if args.city_dir and not bundle_path:
            bundle_path = work / "bundle.pkl"
            ingest = argparse.Namespace(**vars(args))
            ingest.roads = ingest.boundary = ingest.footprints = None
            ingest.parcels = ingest.blockgroups = ingest.zone_table = None
            ingest.out = bundle_path
            cmd_ingest(ingest)
            ran("ingest")
        if not bundle_path:
            raise ValueError("pipeline needs --bundle or --city-dir")

        sample = argparse.Namespace(**vars(args))
        sample.bundle = bundle_path
        sample.out = work / "points.jsonl"
        cmd_sample(sample)
        ran("sample")
        points_path = sample.out

        config = resolve_config(args)
        if config.endpoint:
            fetch = argparse.Namespace(**vars(args))
            fetch.bundle = bundle_path
            fetch.points = points_path
            fetch.cache = work / "cache"
            fetch.out = work / "images.jsonl"
            fetch.out_points = work / "points.final.jsonl"
            cmd_fetch(fetch)
            ran("fetch")
            points_path = fetch.out_points

        if args.maps:
            det = argparse.Namespace(**vars(args))
            det.out = work / "detections.jsonl"
            det.pattern = args.pattern
            cmd_detect_import(det)
            ran("detect-import")

        cov = argparse.Namespace(**vars(args))
        cov.bundle = bundle_path
        cov.points = points_path
        cov.out = work / "coverage.csv"
        cov.per_image = None
        cmd_coverage(cov)
        ran("coverage")

        if args.verified:
            est = argparse.Namespace(**vars(args))
            est.rows = None
            est.coverage = cov.out
            est.out = work / "estimates.csv"
            est.table = work / "estimates.txt"
            est.region = args.region
            cmd_estimate(est)
            ran("estimate")

            if getattr(args, "analyze", False):
                ana = argparse.Namespace(**vars(args))
                ana.bundle = bundle_path
                ana.points = points_path
                ana.out_dir = work / "analysis"
                ana.images = args.images
                cmd_analyze(ana)
                ran("analyze")
        else:
            print("[pipeline] no --verified export given; stopping after coverage")
    except BaseException:
        (work / "PARTIAL").write_text("completed stages: " + (", ".join(done) or "none") + "\n")
        print(f"[pipeline] failed; completed stages marked in {work / 'PARTIAL'}", file=sys.stderr)
        raise
    else:
        if (work / "PARTIAL").exists():
            (work / "PARTIAL").unlink()
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> _Parser:
    conf = _config_parent()
    parser = _Parser(prog="camsurvey", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"camsurvey {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help, **kwargs):
        p = sub.add_parser(name, parents=[conf], help=help, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "read city layers into a bundle")
    p.add_argument("--city", required=True, help="city name")
    p.add_argument("--city-dir", default=None, help="directory with conventionally named layer files")
    for attr in CITY_DIR_FILES:
        p.add_argument("--" + attr.replace("_", "-"), default=None)
    p.add_argument("--out", required=True, help="bundle output path")

    p = add("sample", cmd_sample, "draw capture points on the road network")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="points JSONL output")

    p = add("fetch", cmd_fetch, "check availability and download imagery")
    p.add_argument("--bundle", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--cache", default="cache", help="image cache directory")
    p.add_argument("--out", required=True, help="image records JSONL output")
    p.add_argument("--out-points", required=True, help="accepted points JSONL output")
    p.add_argument("--jobs", type=int, default=4, help="parallel fetch workers")

    p = add("detect-import", cmd_detect_import, "extract instances from detector probability maps")
    p.add_argument("--maps", required=True, help="directory of probability map files")
    p.add_argument("--pattern", default="*.pmap", help="map filename glob")
    p.add_argument("--out", required=True, help="detections JSONL output")

    p = add("serve", cmd_serve, "serve the verification API and UI")
    p.add_argument("--store", required=True, help="verification store directory")
    p.add_argument("--images", default=None, help="image records to register")
    p.add_argument("--detections", default=None, help="detections to import as tasks")
    p.add_argument("--ui", default=None, help="static UI directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--import-only", action="store_true", help="import and exit without serving")

    p = add("export", cmd_export, "export verified detection counts")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="verified JSON output")

    p = add("coverage", cmd_coverage, "compute per-city road coverage")
    p.add_argument("--bundle", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True, help="coverage CSV output")
    p.add_argument("--per-image", default=None, help="optional per-image JSONL output")

    p = add("estimate", cmd_estimate, "turn verified counts into camera estimates")
    p.add_argument("--rows", default=None, help="CSV of city,region,n_detections,n_images,mean_width_m,road_length_km")
    p.add_argument("--coverage", default=None, help="coverage CSV from the coverage stage")
    p.add_argument("--verified", default=None, help="verified JSON from the export stage")
    p.add_argument("--region", default="", help="region label when using --coverage")
    p.add_argument("--out", required=True, help="estimates CSV output")
    p.add_argument("--table", default=None, help="optional rendered table output")

    p = add("analyze", cmd_analyze, "zone rates and demographic regression")
    p.add_argument("--bundle", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--verified", required=True, help="verified JSON from the export stage")
    p.add_argument("--images", default=None, help="image records mapping images to points")
    p.add_argument("--out-dir", required=True)

    p = add("synth", cmd_synth, "generate a synthetic grid city")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--spacing", type=float, required=True, help="street spacing in meters")
    p.add_argument("--setback", type=float, default=8.0, help="building setback in meters")
    p.add_argument("--density", type=float, default=0.0,
                   help="cameras per road km (omit when --camera-count fixes the total)")
    p.add_argument("--camera-count", type=int, default=None, help="plant exactly this many cameras")
    p.add_argument("--name", default="synthia")
    p.add_argument("--out", required=True, help="city directory output")

    p = add("synth-validate", cmd_synth_validate, "Monte-Carlo calibration of the whole pipeline")
    p.add_argument("--rows", type=int, default=7)
    p.add_argument("--cols", type=int, default=7)
    p.add_argument("--spacing", type=float, default=150.0)
    p.add_argument("--setback", type=float, default=8.0)
    p.add_argument("--camera-count", type=int, default=200)
    p.add_argument("--fp-rate", type=float, default=0.05)
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1, help="seed-level worker processes")
    p.add_argument("--out-dir", default=None, help="write report and per-seed CSV here")
    # --sample-count (from the config flags) sets images per seed; default 1500

    p = add("pipeline", cmd_pipeline, "chain the stages over one city")
    p.add_argument("--all", action="store_true", help="run every stage whose inputs are available (default)")
    p.add_argument("--work", required=True, help="working directory for stage outputs")
    p.add_argument("--bundle", default=None)
    p.add_argument("--city", default="city")
    p.add_argument("--city-dir", default=None)
    p.add_argument("--maps", default=None)
    p.add_argument("--pattern", default="*.pmap")
    p.add_argument("--verified", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--region", default="")
    p.add_argument("--analyze", action="store_true", help="also run the analysis stage")
    p.add_argument("--jobs", type=int, default=4)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        import traceback

        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
