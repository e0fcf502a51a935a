"""Flare catalog ingestion, 24-hour labeling, partitioning and sampling.

Labels are binary: FL when the strongest flare of the patch's active region
peaking in the next 24 hours is at least M1.0, NF otherwise. Partitions are
keyed on the HARP onset month so an active region's whole track lands in one
partition.
"""
import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import timedelta
from functools import total_ordering
from typing import Mapping, Optional

import numpy as np

from .augment import AugmentationKind
from .errors import DuplicateIdError, MisuseError, ParameterError, ParseError
from .timeutil import parse_utc

CLASS_RANKS = {"FQ": 0, "A": 1, "B": 2, "C": 3, "M": 4, "X": 5}
# GOES decade thresholds in W/m^2
CLASS_BASES = {"X": 1e-4, "M": 1e-5, "C": 1e-6, "B": 1e-7, "A": 1e-8}
NF_SUBCLASSES = ("FQ", "A", "B", "C")
AUGMENTED_PER_FL = 5


@total_ordering
@dataclass(frozen=True)
class FlareClass:
    letter: str
    magnitude: float = 1.0

    def __post_init__(self):
        if self.letter not in CLASS_RANKS:
            raise ParameterError(f"unknown flare class letter {self.letter!r}")

    @property
    def rank(self):
        return CLASS_RANKS[self.letter]

    def _key(self):
        return (self.rank, 0.0 if self.letter == "FQ" else self.magnitude)

    def __lt__(self, other):
        return self._key() < other._key()

    def __eq__(self, other):
        return isinstance(other, FlareClass) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __str__(self):
        return "FQ" if self.letter == "FQ" else f"{self.letter}{self.magnitude:.1f}"

    @classmethod
    def parse(cls, text):
        raw = (text or "").strip().upper()
        if raw in ("", "FQ"):
            return FLARE_QUIET
        letter, rest = raw[0], raw[1:] or "1.0"
        if letter not in CLASS_BASES:
            raise ParseError(f"bad flare class {text!r}")
        try:
            magnitude = float(rest)
        except ValueError:
            raise ParseError(f"bad flare class magnitude {text!r}") from None
        if not magnitude >= 1.0 or not math.isfinite(magnitude):
            raise ParseError(f"flare class magnitude must be >= 1.0, got {text!r}")
        return cls(letter, magnitude)


FLARE_QUIET = FlareClass("FQ", 0.0)
M1 = FlareClass("M", 1.0)


def classify_peak_flux(peak_flux):
    """GOES class of a peak X-ray flux, magnitude truncated to one decimal."""
    if not peak_flux > 0:
        raise ParameterError(f"peak flux must be positive, got {peak_flux}")
    for letter, base in CLASS_BASES.items():
        if peak_flux >= base:
            # round first so 2.2e-5 / 1e-5 == 2.1999999999999997 stays 2.2
            tenths = math.floor(round(peak_flux / base * 10, 6))
            return FlareClass(letter, tenths / 10)
    return FLARE_QUIET


@dataclass(frozen=True)
class FlareEvent:
    noaa_ar: Optional[int]
    start_time: object
    peak_time: object
    end_time: object
    flare_class: FlareClass
    peak_flux: Optional[float] = None
    flags: tuple = ()

    def __post_init__(self):
        for name in ("start_time", "peak_time", "end_time"):
            object.__setattr__(self, name, parse_utc(getattr(self, name)))
        if not self.start_time <= self.peak_time <= self.end_time:
            raise ParameterError("flare times must satisfy start <= peak <= end")
        if self.peak_flux is not None:
            if classify_peak_flux(self.peak_flux).letter != self.flare_class.letter:
                raise ParameterError(
                    f"peak flux {self.peak_flux} is inconsistent with class {self.flare_class}"
                )


@dataclass(frozen=True)
class FlareLabel:
    label: str
    max_class: FlareClass

    def __post_init__(self):
        if self.label != ("FL" if self.max_class >= M1 else "NF"):
            raise ParameterError(f"label {self.label} disagrees with max class {self.max_class}")


def label_patch(meta, events, horizon=timedelta(hours=24)):
    """Label a patch from events peaking in (observation_time, +horizon]."""
    if meta.noaa_ar is None:
        return FlareLabel("NF", FLARE_QUIET)
    start = meta.observation_time
    stop = start + horizon
    max_class = FLARE_QUIET
    for event in events:
        if event.noaa_ar == meta.noaa_ar and start < event.peak_time <= stop:
            max_class = max(max_class, event.flare_class)
    return FlareLabel("FL" if max_class >= M1 else "NF", max_class)


CATALOG_COLUMNS = ("noaa_ar", "start_time", "peak_time", "end_time", "class")


def parse_flare_catalog(source):
    """Read a flare catalog CSV into FlareEvents.

    ``source`` is a path or an open text file. The header row is optional; a
    ``peak_flux`` column may follow ``class``. Events with no NOAA number or
    a class below A are kept and carry ``missing_noaa_ar`` / ``below_a``
    flags. Errors name the 1-based line and the offending field.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_flare_catalog(fh)
    reader = csv.reader(source)
    columns = list(CATALOG_COLUMNS) + ["peak_flux"]
    events = []
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1 and row[0].strip().lower() == "noaa_ar":
            columns = [c.strip().lower() for c in row]
            missing = set(CATALOG_COLUMNS) - set(columns)
            if missing:
                raise ParseError(f"catalog header lacks {sorted(missing)}", row=lineno)
            continue
        events.append(_parse_catalog_row(dict(zip(columns, row)), lineno, len(row), len(columns)))
    return events


def _parse_catalog_row(cells, lineno, n_cells, n_columns):
    if n_cells < len(CATALOG_COLUMNS) or n_cells > n_columns:
        raise ParseError(f"expected {len(CATALOG_COLUMNS)} or {n_columns} fields, got {n_cells}", row=lineno)
    flags = []
    ar_text = cells["noaa_ar"].strip()
    noaa_ar = None
    if ar_text in ("", "0"):
        flags.append("missing_noaa_ar")
    else:
        try:
            noaa_ar = int(ar_text)
        except ValueError:
            raise ParseError(f"not an integer: {ar_text!r}", row=lineno, field="noaa_ar") from None
    times = {}
    for name in ("start_time", "peak_time", "end_time"):
        try:
            times[name] = parse_utc(cells[name])
        except ParseError as exc:
            raise ParseError(str(exc), row=lineno, field=name) from None
    try:
        flare_class = FlareClass.parse(cells["class"])
    except ParseError as exc:
        raise ParseError(str(exc), row=lineno, field="class") from None
    peak_flux = None
    flux_text = (cells.get("peak_flux") or "").strip()
    if flux_text:
        try:
            peak_flux = float(flux_text)
        except ValueError:
            raise ParseError(f"not a number: {flux_text!r}", row=lineno, field="peak_flux") from None
        if not peak_flux > 0:
            raise ParseError("peak flux must be positive", row=lineno, field="peak_flux")
    if flare_class.letter == "FQ":
        flags.append("below_a")
    if not times["start_time"] <= times["peak_time"]:
        raise ParseError("peak before start", row=lineno, field="peak_time")
    if not times["peak_time"] <= times["end_time"]:
        raise ParseError("end before peak", row=lineno, field="end_time")
    try:
        return FlareEvent(noaa_ar, flare_class=flare_class, peak_flux=peak_flux, flags=tuple(flags), **times)
    except ParameterError as exc:
        raise ParseError(str(exc), row=lineno, field="peak_flux") from None


@dataclass(frozen=True)
class PartitionScheme:
    month_groups: tuple = (
        frozenset({1, 2, 3}),
        frozenset({4, 5, 6}),
        frozenset({7, 8, 9}),
        frozenset({10, 11, 12}),
    )

    def __post_init__(self):
        groups = tuple(frozenset(g) for g in self.month_groups)
        object.__setattr__(self, "month_groups", groups)
        if len(groups) != 4:
            raise ParameterError(f"need exactly four month groups, got {len(groups)}")
        months = [m for g in groups for m in g]
        if len(months) != len(set(months)) or set(months) != set(range(1, 13)):
            raise ParameterError("month groups must be disjoint and cover months 1..12")


def assign_partition(onset, scheme=PartitionScheme()):
    """Partition id 1..4 of a HARP series from its onset month."""
    month = parse_utc(onset).month
    for pid, group in enumerate(scheme.month_groups, start=1):
        if month in group:
            return pid
    raise AssertionError("unreachable: scheme covers all months")


@dataclass(frozen=True)
class SamplingPlan:
    fractions: Mapping[str, float] = field(
        default_factory=lambda: {"A": 0.30, "B": 0.30, "C": 0.30, "FQ": 0.08}
    )
    seed: int = 0

    def __post_init__(self):
        for key, frac in self.fractions.items():
            if key not in NF_SUBCLASSES:
                raise ParameterError(f"fraction given for non-NF class {key!r}")
            if not 0.0 <= frac <= 1.0:
                raise ParameterError(f"fraction for {key} must lie in [0, 1], got {frac}")


def undersample_nf(records, plan=SamplingPlan()):
    """Keep ``floor(fraction * count)`` NF records per max-class subclass.

    Records are drawn without replacement by one generator seeded from the
    plan, walking subclasses in FQ, A, B, C order over records sorted by
    ``patch_id``. The returned subset keeps the input order.
    """
    records = list(records)
    by_class = {s: [] for s in NF_SUBCLASSES}
    for idx, rec in enumerate(records):
        if rec.label != "NF":
            raise MisuseError(f"{rec.patch_id}: only NF records are undersampled")
        by_class[rec.max_class.letter].append(idx)
    rng = np.random.default_rng(plan.seed)
    keep = set()
    for subclass in NF_SUBCLASSES:
        members = sorted(by_class[subclass], key=lambda i: records[i].patch_id)
        k = math.floor(plan.fractions.get(subclass, 1.0) * len(members))
        if k:
            picks = rng.choice(len(members), size=k, replace=False)
            keep.update(members[int(p)] for p in picks)
    return [rec for idx, rec in enumerate(records) if idx in keep]


@dataclass(frozen=True)
class DatasetStats:
    label_counts: dict
    class_counts: dict
    ratio: Optional[float]

    @property
    def ratio_text(self):
        if self.ratio is None:
            return "undefined"
        return f"~1:{round(self.ratio)}"


def dataset_stats(records):
    """Exact per-label and per-class counts plus the NF:FL ratio."""
    labels = Counter()
    classes = Counter()
    for rec in records:
        labels[rec.label] += 1
        classes[rec.max_class.letter] += 1
    counts = {"NF": labels.get("NF", 0), "FL": labels.get("FL", 0)}
    ratio = counts["NF"] / counts["FL"] if counts["FL"] else None
    return DatasetStats(counts, {k: classes.get(k, 0) for k in CLASS_RANKS}, ratio)


@dataclass(frozen=True)
class ManifestRow:
    patch_id: str
    harp_id: int
    partition: int
    split: str
    label: str
    provenance: str
    path: str
    max_class: FlareClass = FLARE_QUIET


SPLITS = {1: "train", 2: "train", 3: "validation", 4: "test"}


def build_manifest(records, partitions, plan=SamplingPlan()):
    """Assign splits, undersample NF and add augmented rows in the train set.

    ``partitions`` maps harp_id to partition id. Partitions 1 and 2 form the
    training split (NF undersampled, each FL row followed by its five
    augmented rows); partitions 3 and 4 pass through untouched as validation
    and test.
    """
    records = sorted(records, key=lambda r: r.patch_id)
    seen = Counter(r.patch_id for r in records)
    dupes = sorted(pid for pid, n in seen.items() if n > 1)
    if dupes:
        raise DuplicateIdError(f"duplicate patch ids: {dupes[:5]}")
    assigned = []
    for rec in records:
        try:
            pid = partitions[rec.harp_id]
        except KeyError:
            raise ParameterError(f"no partition for HARP {rec.harp_id}") from None
        assigned.append(replace(rec, partition=pid, split=SPLITS[pid], provenance="original"))

    train_nf = [r for r in assigned if r.split == "train" and r.label == "NF"]
    kept_nf = {r.patch_id for r in undersample_nf(train_nf, plan)}

    rows = []
    for rec in sorted(assigned, key=lambda r: (r.partition, r.patch_id)):
        if rec.split != "train":
            rows.append(rec)
        elif rec.label == "NF":
            if rec.patch_id in kept_nf:
                rows.append(rec)
        else:
            rows.append(rec)
            rows.extend(
                replace(rec, patch_id=f"{rec.patch_id}__{kind.value}", provenance=kind.value)
                for kind in AugmentationKind
            )
    ids = Counter(r.patch_id for r in rows)
    clash = sorted(pid for pid, n in ids.items() if n > 1)
    if clash:
        raise DuplicateIdError(f"augmented ids collide with existing ids: {clash[:5]}")
    return rows
