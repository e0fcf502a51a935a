"""On-disk formats: patch bundles, PGM images, CSV tables and run config.

A patch bundle is a directory holding three files::

    meta.txt      key=value lines (harp_id, noaa_ar, observation_time,
                  harp_onset_time, center_longitude, height, width)
    flux.f32le    row-major little-endian float32 flux values (Gauss)
    bitmap.u8     row-major uint8 SHARP bitmap codes
"""
import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import FlareClass, ManifestRow, PartitionScheme, SamplingPlan
from .errors import (
    BundleFormatError,
    ContractViolation,
    FlarebenchError,
    InvalidCodeError,
    LengthMismatchError,
    ParseError,
)
from .evaluate import PredictionRecord
from .raster import BITMAP_CODES, PatchMetadata, PipelineConfig
from .timeutil import format_utc, parse_utc

META_FILE = "meta.txt"
FLUX_FILE = "flux.f32le"
BITMAP_FILE = "bitmap.u8"
META_KEYS = (
    "harp_id",
    "noaa_ar",
    "observation_time",
    "harp_onset_time",
    "center_longitude",
    "height",
    "width",
)
PREDICTION_COLUMNS = ("patch_id", "observation_time", "center_longitude", "true_label", "score")
MANIFEST_COLUMNS = ("patch_id", "harp_id", "partition", "split", "label", "provenance", "path", "max_class")


def parse_key_values(text, source="<text>"):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected key=value", row=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ParseError(f"{source}: duplicate key", row=lineno, field=key)
        pairs[key] = value
    return pairs


def write_patch_bundle(path, raster, bitmap, meta):
    raster = np.asarray(raster, dtype=np.float64)
    bitmap = np.asarray(bitmap)
    if raster.ndim != 2 or raster.shape != bitmap.shape:
        raise ContractViolation(f"raster {raster.shape} and bitmap {bitmap.shape} must be equal 2-D shapes")
    flux = raster.astype("<f4")
    if not np.isfinite(flux).all():
        raise ContractViolation("flux values must be finite in float32")
    if not np.isin(bitmap, BITMAP_CODES).all():
        raise ContractViolation("bitmap holds codes outside {0, 1, 2, 33, 34}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [
        f"harp_id={meta.harp_id}",
        f"noaa_ar={'' if meta.noaa_ar is None else meta.noaa_ar}",
        f"observation_time={format_utc(meta.observation_time)}",
        f"harp_onset_time={format_utc(meta.harp_onset_time)}",
        f"center_longitude={float(meta.center_longitude)!r}",
        f"height={raster.shape[0]}",
        f"width={raster.shape[1]}",
    ]
    (path / META_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    (path / FLUX_FILE).write_bytes(flux.tobytes())
    (path / BITMAP_FILE).write_bytes(bitmap.astype(np.uint8).tobytes())
    return path


def _meta_field(pairs, key, convert):
    if key not in pairs:
        raise BundleFormatError("missing key", field=key)
    try:
        return convert(pairs[key])
    except (ValueError, FlarebenchError) as exc:
        raise BundleFormatError(f"bad value {pairs[key]!r}: {exc}", field=key) from None


def load_bundle_metadata(path):
    """Read only the sidecar: ``(PatchMetadata, height, width)``."""
    path = Path(path)
    try:
        text = (path / META_FILE).read_text(encoding="utf-8")
    except OSError as exc:
        raise BundleFormatError(f"{path}: cannot read metadata: {exc}", field=META_FILE) from None
    pairs = parse_key_values(text, str(path / META_FILE))
    height = _meta_field(pairs, "height", int)
    width = _meta_field(pairs, "width", int)
    if height < 1 or width < 1:
        raise BundleFormatError(f"dimensions must be positive, got {height}x{width}", field="height")
    harp_id = _meta_field(pairs, "harp_id", int)
    noaa_ar = _meta_field(pairs, "noaa_ar", lambda v: int(v) if v else None)
    obs = _meta_field(pairs, "observation_time", parse_utc)
    onset = _meta_field(pairs, "harp_onset_time", parse_utc)
    lon = _meta_field(pairs, "center_longitude", float)
    try:
        meta = PatchMetadata(harp_id, noaa_ar, obs, lon, onset)
    except FlarebenchError as exc:
        raise BundleFormatError(f"{path}: {exc}", field="metadata") from None
    return meta, height, width


def load_patch_bundle(path):
    """Return ``(raster, bitmap, metadata)`` from a bundle directory."""
    path = Path(path)
    meta, height, width = load_bundle_metadata(path)
    n = height * width
    try:
        flux_bytes = (path / FLUX_FILE).read_bytes()
        bitmap_bytes = (path / BITMAP_FILE).read_bytes()
    except OSError as exc:
        raise BundleFormatError(f"{path}: {exc}", field="payload") from None
    if len(flux_bytes) != 4 * n:
        raise LengthMismatchError(f"expected {4 * n} bytes, found {len(flux_bytes)}", field=FLUX_FILE)
    if len(bitmap_bytes) != n:
        raise LengthMismatchError(f"expected {n} bytes, found {len(bitmap_bytes)}", field=BITMAP_FILE)
    raster = np.frombuffer(flux_bytes, dtype="<f4").astype(np.float64).reshape(height, width)
    if not np.isfinite(raster).all():
        raise BundleFormatError("non-finite flux value", field=FLUX_FILE)
    bitmap = np.frombuffer(bitmap_bytes, dtype=np.uint8).reshape(height, width).copy()
    bad = np.setdiff1d(np.unique(bitmap), BITMAP_CODES)
    if bad.size:
        raise InvalidCodeError(f"invalid bitmap codes {bad.tolist()}", field=BITMAP_FILE)
    return raster, bitmap, meta


def find_bundles(root):
    """Bundle directories under ``root`` (or ``root`` itself), sorted by name."""
    root = Path(root)
    if (root / META_FILE).is_file():
        return [root]
    return sorted(p.parent for p in root.glob(f"*/{META_FILE}"))


def pgm_bytes(patch):
    patch = np.asarray(patch)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ContractViolation(f"image patch must be square, got {patch.shape}")
    if patch.dtype != np.uint8:
        if patch.min(initial=0) < 0 or patch.max(initial=0) > 255:
            raise ContractViolation("image bytes must lie in [0, 255]")
        patch = patch.astype(np.uint8)
    h, w = patch.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + patch.tobytes()


def write_image_pgm(patch, path):
    data = pgm_bytes(patch)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write image {os.fspath(path)}: {exc}") from exc
    return path


def read_image_pgm(path):
    data = Path(path).read_bytes()
    # header is three whitespace-separated tokens after the magic
    tokens = data.split(maxsplit=4)
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 is supported")
    payload = data[len(data) - width * height:]
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def parse_prediction_csv(source):
    """Read prediction rows; errors name the 1-based line and field."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_prediction_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return []
    if tuple(c.strip() for c in header) != PREDICTION_COLUMNS:
        raise ParseError(f"header must be {','.join(PREDICTION_COLUMNS)}", row=1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(PREDICTION_COLUMNS):
            raise ParseError(f"expected {len(PREDICTION_COLUMNS)} fields, got {len(row)}", row=lineno)
        cells = dict(zip(PREDICTION_COLUMNS, (c.strip() for c in row)))
        try:
            obs = parse_utc(cells["observation_time"])
        except ParseError as exc:
            raise ParseError(str(exc), row=lineno, field="observation_time") from None
        values = {}
        for key in ("center_longitude", "score"):
            try:
                values[key] = float(cells[key])
            except ValueError:
                raise ParseError(f"not a number: {cells[key]!r}", row=lineno, field=key) from None
        if not abs(values["center_longitude"]) <= 90:
            raise ParseError("longitude outside [-90, 90]", row=lineno, field="center_longitude")
        if not 0.0 <= values["score"] <= 1.0:
            raise ParseError("score outside [0, 1]", row=lineno, field="score")
        if cells["true_label"] not in ("FL", "NF"):
            raise ParseError(f"label must be FL or NF, got {cells['true_label']!r}", row=lineno, field="true_label")
        records.append(
            PredictionRecord(cells["patch_id"], obs, values["center_longitude"], values["score"], cells["true_label"])
        )
    return records


def write_prediction_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for r in records:
            writer.writerow(
                [r.patch_id, format_utc(r.observation_time), repr(float(r.center_longitude)), r.true_label, repr(float(r.score))]
            )
    return path


def manifest_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for r in rows:
        writer.writerow([r.patch_id, r.harp_id, r.partition, r.split, r.label, r.provenance, r.path, str(r.max_class)])
    return buf.getvalue()


def write_manifest(rows, path):
    Path(path).write_text(manifest_text(rows), encoding="utf-8")
    return path


def read_manifest(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS[:-1]) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"manifest lacks columns {sorted(missing)}", row=1)
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            try:
                rows.append(
                    ManifestRow(
                        patch_id=cells["patch_id"],
                        harp_id=int(cells["harp_id"]),
                        partition=int(cells["partition"]),
                        split=cells["split"],
                        label=cells["label"],
                        provenance=cells["provenance"],
                        path=cells["path"],
                        max_class=FlareClass.parse(cells.get("max_class") or ""),
                    )
                )
            except ValueError as exc:
                raise ParseError(str(exc), row=lineno) from None
    return rows


def _month_groups(text):
    groups = []
    for chunk in text.split(";"):
        months = set()
        for part in chunk.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-"))
                months.update(range(lo, hi + 1))
            elif part:
                months.add(int(part))
        groups.append(frozenset(months))
    return tuple(groups)


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scheme: PartitionScheme = field(default_factory=PartitionScheme)
    plan: SamplingPlan = field(default_factory=SamplingPlan)
    augment_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ContractViolation(f"workers must be >= 1, got {self.workers}")


CONFIG_KEYS = {
    "clamp_cap": float,
    "zero_band": float,
    "min_roi_width": int,
    "target_side": int,
    "month_groups": _month_groups,
    "fraction_fq": float,
    "fraction_a": float,
    "fraction_b": float,
    "fraction_c": float,
    "sample_seed": int,
    "augment_seed": int,
    "workers": int,
}


def config_from_pairs(pairs):
    values = {}
    for key, raw in pairs.items():
        if key not in CONFIG_KEYS:
            raise ParseError("unknown config key", field=key)
        try:
            values[key] = CONFIG_KEYS[key](raw)
        except ValueError:
            raise ParseError(f"bad value {raw!r}", field=key) from None
    defaults = PipelineConfig()
    pipeline = PipelineConfig(
        clamp_cap=values.get("clamp_cap", defaults.clamp_cap),
        zero_band=values.get("zero_band", defaults.zero_band),
        min_roi_width=values.get("min_roi_width", defaults.min_roi_width),
        target_side=values.get("target_side", defaults.target_side),
    )
    scheme = PartitionScheme(values["month_groups"]) if "month_groups" in values else PartitionScheme()
    fractions = dict(SamplingPlan().fractions)
    for sub in ("FQ", "A", "B", "C"):
        fractions[sub] = values.get(f"fraction_{sub.lower()}", fractions[sub])
    plan = SamplingPlan(fractions, values.get("sample_seed", 0))
    return RunConfig(pipeline, scheme, plan, values.get("augment_seed", 0), values.get("workers", 1))


def load_config(path):
    text = Path(path).read_text(encoding="utf-8")
    return config_from_pairs(parse_key_values(text, str(path)))
