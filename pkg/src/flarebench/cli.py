"""Command-line batch driver.

    flarebench <preprocess|label|partition|augment|calibrate|evaluate|report>
               [--config FILE] [--workers N] [--seed S] [--threshold T]
               -i INPUT [-o OUTPUT] [--catalog FILE]

Per-item work runs in a process pool; results are gathered in input order,
so every output file is identical for any worker count. Failures exit
nonzero with a one-line JSON summary on stderr.
"""
import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .augment import expand_fl_record
from .dataset import ManifestRow, SamplingPlan, assign_partition, build_manifest, label_patch, parse_flare_catalog
from .errors import FlarebenchError, ParseError
from .evaluate import (
    LONGITUDE_LIMITS,
    calibration_curve,
    calibrate_threshold,
    longitude_subset_counts,
    merge_counts,
    plot_series,
    read_report,
    render_report,
    result_from_counts,
    zone_counts,
)
from .formats import (
    RunConfig,
    find_bundles,
    load_bundle_metadata,
    load_config,
    load_patch_bundle,
    parse_prediction_csv,
    read_manifest,
    write_image_pgm,
    write_manifest,
    write_patch_bundle,
)
from .raster import PatchRecord, Rejection, prepare_raster, scale_to_bytes

log = logging.getLogger("flarebench")

LOG_COLUMNS = ("patch_id", "status", "stage", "detail")


class CommandError(FlarebenchError):
    """A subcommand finished but some items failed."""


def _map(func, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _chunks(items, n):
    items = list(items)
    size = max(1, -(-len(items) // n))
    return [items[i:i + size] for i in range(0, len(items), size)] or [[]]


def _write_log(entries, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        writer.writerows(entries)


def _preprocess_one(task):
    bundle, out_dir, pipeline = task
    name = Path(bundle).name
    try:
        raster, bitmap, _ = load_patch_bundle(bundle)
    except FlarebenchError as exc:
        return (name, "error", "load", str(exc))
    try:
        prepared = prepare_raster(raster, bitmap, pipeline)
    except FlarebenchError as exc:
        return (name, "error", "roi_extract", str(exc))
    if isinstance(prepared, Rejection):
        return (name, "rejected", prepared.stage, prepared.reason)
    image = f"{name}.pgm"
    write_image_pgm(scale_to_bytes(prepared, pipeline), Path(out_dir) / image)
    return (name, "accepted", "", image)


def cmd_preprocess(args, config):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    bundles = find_bundles(args.input)
    entries = _map(_preprocess_one, [(str(b), str(out), config.pipeline) for b in bundles], config.workers)
    _write_log(entries, out / "preprocess_log.csv")
    summary = {s: sum(1 for e in entries if e[1] == s) for s in ("accepted", "rejected", "error")}
    log.info("preprocess: %s", summary)
    if summary["error"]:
        raise CommandError(f"{summary['error']} bundle(s) failed; see {out / 'preprocess_log.csv'}")
    return summary


def _label_one(task):
    bundle, events, scheme = task
    meta, _, _ = load_bundle_metadata(bundle)
    label = label_patch(meta, events)
    return ManifestRow(
        patch_id=Path(bundle).name,
        harp_id=meta.harp_id,
        partition=assign_partition(meta.harp_onset_time, scheme),
        split="",
        label=label.label,
        provenance="original",
        path=str(bundle),
        max_class=label.max_class,
    )


def cmd_label(args, config):
    if not args.catalog:
        raise ParseError("label needs --catalog")
    events = parse_flare_catalog(args.catalog)
    bundles = find_bundles(args.input)
    rows = _map(_label_one, [(str(b), events, config.scheme) for b in bundles], config.workers)
    write_manifest(rows, args.output)
    return {"rows": len(rows), "FL": sum(r.label == "FL" for r in rows)}


def cmd_partition(args, config):
    rows = [r for r in read_manifest(args.input) if r.provenance == "original"]
    partitions = {}
    for r in rows:
        if partitions.setdefault(r.harp_id, r.partition) != r.partition:
            raise ParseError(f"HARP {r.harp_id} appears in more than one partition")
    manifest = build_manifest(rows, partitions, config.plan)
    write_manifest(manifest, args.output)
    return {s: sum(1 for r in manifest if r.split == s) for s in ("train", "validation", "test")}


def _augment_one(task):
    source, rows, out_dir, pipeline, seed = task
    raster, bitmap, meta = load_patch_bundle(source)
    prepared = prepare_raster(raster, bitmap, pipeline)
    if isinstance(prepared, Rejection):
        return [(r.patch_id, "rejected", prepared.stage, prepared.reason) for r in rows]
    side = pipeline.target_side
    record = PatchRecord(prepared, np.full((side, side), 34, dtype=np.uint8), meta, "FL")
    by_kind = {v.provenance: v for v in expand_fl_record(record, seed, pipeline)}
    entries = []
    for r in rows:
        variant = by_kind[r.provenance]
        write_patch_bundle(Path(out_dir) / r.patch_id, variant.raster, variant.bitmap, meta)
        write_image_pgm(scale_to_bytes(variant.raster, pipeline), Path(out_dir) / f"{r.patch_id}.pgm")
        entries.append((r.patch_id, "accepted", "", f"{r.patch_id}.pgm"))
    return entries


def cmd_augment(args, config):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    groups = {}
    for r in read_manifest(args.input):
        if r.split == "train" and r.provenance != "original":
            groups.setdefault(r.path, []).append(r)
    tasks = [(src, groups[src], str(out), config.pipeline, config.augment_seed) for src in sorted(groups)]
    entries = [e for batch in _map(_augment_one, tasks, config.workers) for e in batch]
    _write_log(entries, out / "augment_log.csv")
    return {"augmented": sum(1 for e in entries if e[1] == "accepted")}


def cmd_calibrate(args, config):
    records = parse_prediction_csv(args.input)
    threshold = calibrate_threshold(records)
    best = dict(calibration_curve(records))[threshold]
    if args.output:
        Path(args.output).write_text(f"{threshold:.2f}\n", encoding="utf-8")
    return {"threshold": round(threshold, 2), "css": round(best, 6)}


def _evaluate_chunk(task):
    records, threshold, limits = task
    return longitude_subset_counts(records, threshold, limits), zone_counts(records, threshold)


def _reduce(parts):
    total = parts[0]
    for part in parts[1:]:
        total = [merge_counts(a, b) for a, b in zip(total, part)]
    return total


def _threshold_arg(args):
    if args.threshold is None:
        raise ParseError("evaluate needs --threshold (a value or a file written by calibrate)")
    text = args.threshold
    if Path(text).is_file():
        text = Path(text).read_text(encoding="utf-8").strip()
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad threshold {args.threshold!r}", field="threshold") from None


def cmd_evaluate(args, config):
    threshold = _threshold_arg(args)
    records = parse_prediction_csv(args.input)
    tasks = [(chunk, threshold, LONGITUDE_LIMITS) for chunk in _chunks(records, config.workers)]
    parts = _map(_evaluate_chunk, tasks, config.workers)
    lon_counts = _reduce([p[0] for p in parts])
    z_counts = _reduce([p[1] for p in parts])
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    lon = [result_from_counts(f"lon_le_{L:g}", c) for L, c in zip(LONGITUDE_LIMITS, lon_counts)]
    zones = [result_from_counts(f"zone{z}", c) for z, c in zip((1, 2, 3), z_counts)]
    render_report(lon, out / "longitude_report.csv")
    render_report(zones, out / "zone_report.csv")
    undefined = [r.subset for r in lon + zones if not r.defined]
    return {"threshold": threshold, "records": len(records), "undefined": undefined}


def cmd_report(args, config):
    src = Path(args.input)
    paths = sorted(src.glob("*_report.csv")) if src.is_dir() else [src]
    series = plot_series({p.stem: read_report(p) for p in paths})
    text = json.dumps(series, indent=2, sort_keys=True) + "\n"
    Path(args.output).write_text(text, encoding="utf-8")
    return {"reports": len(paths)}


COMMANDS = {
    "preprocess": cmd_preprocess,
    "label": cmd_label,
    "partition": cmd_partition,
    "augment": cmd_augment,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="flarebench", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key=value run config")
    parser.add_argument("--workers", type=int, help="process count (overrides config)")
    parser.add_argument("--seed", type=int, help="sampling and augmentation seed (overrides config)")
    parser.add_argument("--threshold", help="decision threshold, or a file holding one")
    parser.add_argument("-i", "--input", required=True, help="bundle dir, manifest, predictions or reports")
    parser.add_argument("-o", "--output", help="output file or directory")
    parser.add_argument("--catalog", help="flare catalog CSV (label)")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def resolve_config(args):
    config = load_config(args.config) if args.config else RunConfig()
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    if args.seed is not None:
        config = replace(config, augment_seed=args.seed, plan=SamplingPlan(dict(config.plan.fractions), args.seed))
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = resolve_config(args)
        if args.output is None and args.command not in ("calibrate",):
            raise ParseError(f"{args.command} needs -o/--output")
        result = COMMANDS[args.command](args, config)
    except (FlarebenchError, OSError) as exc:
        summary = {"status": "error", "command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(summary, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": args.command, **result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
