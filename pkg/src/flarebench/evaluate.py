"""Forecast verification for binary FL/NF predictions.

Skill scores
------------
TSS = TP/(TP+FN) - FP/(FP+TN)
HSS = 2 (TP*TN - FN*FP) / (P (FN+TN) + (TP+FP) N),  P = TP+FN, N = TN+FP
CSS = sqrt(TSS * HSS), or 0 when TSS and HSS disagree in sign

A record is predicted FL when ``score >= threshold``. Longitude subsets are
cumulative (|lon| <= L); zones are disjoint bands with boundary points
assigned to the inner zone.
"""
import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, UndefinedScoreError
from .timeutil import parse_utc

CALIBRATION_GRID = tuple(i / 100 for i in range(1, 100))
LONGITUDE_LIMITS = (30, 45, 60, 75, 90)
ZONE_EDGES = ((0, 30), (30, 60), (60, 90))
REPORT_COLUMNS = ("subset", "tp", "fp", "tn", "fn", "tss", "hss", "css")


@dataclass(frozen=True)
class PredictionRecord:
    patch_id: str
    observation_time: object
    center_longitude: float
    score: float
    true_label: str

    def __post_init__(self):
        object.__setattr__(self, "observation_time", parse_utc(self.observation_time))
        if not 0.0 <= self.score <= 1.0:
            raise ParameterError(f"{self.patch_id}: score {self.score} outside [0, 1]")
        if not abs(self.center_longitude) <= 90:
            raise ParameterError(f"{self.patch_id}: longitude {self.center_longitude} outside [-90, 90]")
        if self.true_label not in ("FL", "NF"):
            raise ParameterError(f"{self.patch_id}: label must be FL or NF, got {self.true_label!r}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ParameterError(f"negative confusion count in {self}")

    @property
    def positives(self):
        return self.tp + self.fn

    @property
    def negatives(self):
        return self.tn + self.fp

    def __add__(self, other):
        return merge_counts(self, other)


def merge_counts(a, b):
    return ConfusionCounts(a.tp + b.tp, a.tn + b.tn, a.fp + b.fp, a.fn + b.fn)


def _check_threshold(threshold):
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")


def counts_from_arrays(scores, is_fl, threshold):
    predicted = np.asarray(scores, dtype=np.float64) >= threshold
    actual = np.asarray(is_fl, dtype=bool)
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))
    tn = int(actual.size - tp - fp - fn)
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def confusion_counts(records, threshold):
    _check_threshold(threshold)
    records = list(records)
    scores = [r.score for r in records]
    is_fl = [r.true_label == "FL" for r in records]
    return counts_from_arrays(scores, is_fl, threshold)


def tss(counts):
    if counts.positives == 0 or counts.negatives == 0:
        raise UndefinedScoreError(f"TSS undefined with P={counts.positives}, N={counts.negatives}")
    return counts.tp / counts.positives - counts.fp / counts.negatives


def hss(counts):
    p, n = counts.positives, counts.negatives
    denom = p * (counts.fn + counts.tn) + (counts.tp + counts.fp) * n
    if denom == 0:
        raise UndefinedScoreError("HSS undefined: zero denominator")
    return 2.0 * (counts.tp * counts.tn - counts.fn * counts.fp) / denom


def css(tss_value, hss_value):
    product = tss_value * hss_value
    return 0.0 if product < 0 else math.sqrt(product)


@dataclass(frozen=True)
class SkillScores:
    tss: float
    hss: float
    css: float


def skill_scores(counts):
    t, h = tss(counts), hss(counts)
    return SkillScores(t, h, css(t, h))


def calibration_curve(validation, grid=CALIBRATION_GRID):
    """CSS at each grid threshold as a list of ``(threshold, css)`` pairs."""
    records = list(validation)
    scores = np.array([r.score for r in records], dtype=np.float64)
    is_fl = np.array([r.true_label == "FL" for r in records], dtype=bool)
    if not is_fl.any() or is_fl.all():
        raise UndefinedScoreError("validation set needs both FL and NF records")
    return [(t, skill_scores(counts_from_arrays(scores, is_fl, t)).css) for t in grid]


def calibrate_threshold(validation, grid=CALIBRATION_GRID):
    """Grid threshold with the highest CSS; ties go to the smallest."""
    best_t, best_css = None, -1.0
    for t, value in calibration_curve(validation, grid):
        if value > best_css:
            best_t, best_css = t, value
    return best_t


@dataclass(frozen=True)
class SubsetResult:
    """Counts and scores for one slice; ``scores`` is None when undefined."""

    subset: str
    counts: Optional[ConfusionCounts]
    scores: Optional[SkillScores]

    @property
    def defined(self):
        return self.scores is not None


def result_from_counts(name, counts):
    try:
        scores = skill_scores(counts)
    except UndefinedScoreError:
        scores = None
    return SubsetResult(name, counts, scores)


def zone_of(longitude):
    """1, 2 or 3 for |lon| in [0, 30], (30, 60], (60, 90]."""
    a = abs(longitude)
    if a > 90:
        raise ParameterError(f"longitude {longitude} outside [-90, 90]")
    return 1 if a <= 30 else 2 if a <= 60 else 3


def longitude_subset_counts(records, threshold, limits=LONGITUDE_LIMITS):
    _check_threshold(threshold)
    records = list(records)
    lon = np.abs([r.center_longitude for r in records]) if records else np.zeros(0)
    scores = np.array([r.score for r in records], dtype=np.float64)
    is_fl = np.array([r.true_label == "FL" for r in records], dtype=bool)
    return [counts_from_arrays(scores[lon <= L], is_fl[lon <= L], threshold) for L in limits]


def zone_counts(records, threshold):
    _check_threshold(threshold)
    records = list(records)
    zones = np.array([zone_of(r.center_longitude) for r in records], dtype=int)
    scores = np.array([r.score for r in records], dtype=np.float64)
    is_fl = np.array([r.true_label == "FL" for r in records], dtype=bool)
    return [counts_from_arrays(scores[zones == z], is_fl[zones == z], threshold) for z in (1, 2, 3)]


def evaluate_longitude_subsets(records, threshold, limits=LONGITUDE_LIMITS):
    counts = longitude_subset_counts(records, threshold, limits)
    return [result_from_counts(f"lon_le_{L:g}", c) for L, c in zip(limits, counts)]


def evaluate_zones(records, threshold):
    counts = zone_counts(records, threshold)
    return [result_from_counts(f"zone{z}", c) for z, c in zip((1, 2, 3), counts)]


def _fmt(value):
    return "undefined" if value is None else f"{value:.6f}"


def format_report(results):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for res in results:
        c = res.counts
        counts = ["", "", "", ""] if c is None else [c.tp, c.fp, c.tn, c.fn]
        s = res.scores
        scores = [None] * 3 if s is None else [s.tss, s.hss, s.css]
        writer.writerow([res.subset, *counts, *(_fmt(v) for v in scores)])
    return buf.getvalue()


def render_report(results, path):
    """Write a report CSV; returns the path written."""
    text = format_report(results)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report {os.fspath(path)}: {exc}") from exc
    return path


def read_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_series(reports):
    """Column-oriented series per report, ready to hand to a plotting call.

    ``reports`` maps a report name to its parsed rows. Undefined scores come
    out as None.
    """
    series = {}
    for name in sorted(reports):
        rows = reports[name]
        entry = {"subset": [r["subset"] for r in rows]}
        for key in ("tss", "hss", "css"):
            entry[key] = [None if r[key] == "undefined" else float(r[key]) for r in rows]
        series[name] = entry
    return series
