"""Metric-analysis tables computed from per-sample score files.

``error_type_averages`` gives the mean score of every metric per error-type
label; ``percentile_bins`` groups samples into equal-population bins by one
anchor metric and summarizes every other metric per bin with box statistics.
Both emit CSV; plotting is left to the reader.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

ERROR_TYPES = ("PredE", "EntE", "CircE", "OutE", "GramE", "LinkE", "CorefE", "OtherE", "NE")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredSample:
    id: str
    scores: Mapping[str, float]
    label: str | None = None

    def __post_init__(self):
        if self.label is not None and self.label not in ERROR_TYPES:
            raise ReportError(f"sample {self.id}: unknown error type {self.label!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredSample":
        return cls(str(d["id"]), {k: float(v) for k, v in d["scores"].items()}, d.get("label"))


def quantile(sorted_values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks (numpy's default method)."""
    if not sorted_values:
        raise ReportError("quantile of an empty sequence")
    pos = (len(sorted_values) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    frac = pos - lo
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac


def box_stats(values: Iterable[float]) -> tuple[float, float, float, float, float]:
    v = sorted(values)
    return (v[0], quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), v[-1])


def _metrics(samples: Sequence[ScoredSample]) -> list[str]:
    names: set[str] = set()
    for s in samples:
        names.update(s.scores)
    return sorted(names)


def error_type_averages(samples: Sequence[ScoredSample]) -> dict[str, dict[str, float | None]]:
    """``table[metric][label]`` = mean score, or None for labels with no samples."""
    unlabeled = [s.id for s in samples if s.label is None]
    if unlabeled:
        raise ReportError(f"unlabeled samples: {', '.join(unlabeled)}")
    table: dict[str, dict[str, float | None]] = {}
    for metric in _metrics(samples):
        row: dict[str, float | None] = {}
        for label in ERROR_TYPES:
            vals = [s.scores[metric] for s in samples if s.label == label and metric in s.scores]
            row[label] = sum(vals) / len(vals) if vals else None
        table[metric] = row
    return table


def error_type_csv(table: Mapping[str, Mapping[str, float | None]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *ERROR_TYPES])
    for metric, row in table.items():
        w.writerow([metric, *("" if row[l] is None else repr(row[l]) for l in ERROR_TYPES)])
    return buf.getvalue()


@dataclass
class Bin:
    index: int
    sample_ids: list[str]
    anchor_range: tuple[float, float]
    boxes: dict[str, tuple[float, float, float, float, float]] = field(default_factory=dict)


def percentile_bins(samples: Sequence[ScoredSample], anchor: str, n_bins: int) -> list[Bin]:
    if n_bins < 2:
        raise ReportError("n_bins must be at least 2")
    if len(samples) < n_bins:
        raise ReportError(f"need at least {n_bins} samples, got {len(samples)}")
    missing = [s.id for s in samples if anchor not in s.scores]
    if missing:
        raise ReportError(f"samples without anchor metric {anchor!r}: {', '.join(missing)}")
    ranked = sorted(samples, key=lambda s: (s.scores[anchor], s.id))
    others = [m for m in _metrics(samples) if m != anchor]
    n = len(ranked)
    bins = []
    for b in range(n_bins):
        members = ranked[b * n // n_bins:(b + 1) * n // n_bins]
        anchors = [s.scores[anchor] for s in members]
        bin_ = Bin(b, [s.id for s in members], (min(anchors), max(anchors)))
        for m in others:
            vals = [s.scores[m] for s in members if m in s.scores]
            if vals:
                bin_.boxes[m] = box_stats(vals)
        bins.append(bin_)
    return bins


def bins_csv(bins: Sequence[Bin]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "size", "anchor_min", "anchor_max", "metric", "min", "q1", "median", "q3", "max"])
    for b in bins:
        for metric, stats in sorted(b.boxes.items()):
            w.writerow([b.index, len(b.sample_ids), repr(b.anchor_range[0]), repr(b.anchor_range[1]), metric,
                        *(repr(x) for x in stats)])
    return buf.getvalue()
