"""Ranking metrics over sparsely verified multi-label predictions.

Only (sample, class) pairs covered by a verification mask participate in
any metric; unverified pairs are excluded outright, never counted as
negatives. Ranking ties are broken by ascending sample id so every metric
is deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import UsageError


class PRPoint(NamedTuple):
    threshold: float
    recall: float
    precision: float


@dataclass(frozen=True)
class RankedPredictions:
    """Scores plus verification data for one evaluation split.

    scores:    (n, d) float, every (sample, class) pair
    truth:     (n, d) {0,1}, meaningful only where verified
    verified:  (n, d) bool mask of verified pairs
    sample_ids:(n,) ints used for tie-breaking
    """

    scores: np.ndarray
    truth: np.ndarray
    verified: np.ndarray
    sample_ids: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        t = np.asarray(self.truth)
        m = np.asarray(self.verified, dtype=bool)
        ids = np.asarray(self.sample_ids)
        if s.ndim != 2 or t.shape != s.shape or m.shape != s.shape:
            raise UsageError(
                f"RankedPredictions: scores {s.shape}, truth {t.shape}, "
                f"verified {m.shape} must share one 2-d shape"
            )
        if ids.shape != (s.shape[0],):
            raise UsageError(f"RankedPredictions: sample_ids shape {ids.shape} != ({s.shape[0]},)")
        if not np.all(np.isfinite(s[m])):
            raise UsageError("RankedPredictions: verified pairs carry non-finite scores")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "truth", t)
        object.__setattr__(self, "verified", m)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def class_count(self) -> int:
        return self.scores.shape[1]


def average_precision(scores, truths, tie_ids=None):
    """AP of one ranked list: mean of precision-at-k over the positive ranks.

    Sorts by descending score, ascending tie id. Returns None when the list
    holds no positives (the class is undefined, not zero).
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths)
    if s.ndim != 1 or t.shape != s.shape:
        raise UsageError(f"average_precision: need matching 1-d inputs, got {s.shape} and {t.shape}")
    n = s.size
    positives = int(np.count_nonzero(t == 1))
    if positives == 0:
        return None
    ids = np.arange(n) if tie_ids is None else np.asarray(tie_ids)
    if ids.shape != (n,):
        raise UsageError(f"average_precision: tie_ids shape {ids.shape} != ({n},)")
    order = np.lexsort((ids, -s))
    rel = (t[order] == 1).astype(np.float64)
    precision_at_k = np.cumsum(rel) / np.arange(1, n + 1)
    return float(np.sum(precision_at_k * rel) / positives)


def per_class_average_precision(pred: RankedPredictions) -> list[float | None]:
    """AP per class over that class's verified pairs; None where undefined."""
    out: list[float | None] = []
    for c in range(pred.class_count):
        mask = pred.verified[:, c]
        if not np.any(mask):
            out.append(None)
            continue
        out.append(
            average_precision(
                pred.scores[mask, c], pred.truth[mask, c], tie_ids=pred.sample_ids[mask]
            )
        )
    return out


def mean_average_precision(per_class_ap: Sequence[float | None]) -> float:
    """Mean over defined classes only; undefined classes are excluded, not zeroed."""
    defined = [ap for ap in per_class_ap if ap is not None]
    if not defined:
        raise UsageError("mean_average_precision: every class is undefined")
    return float(sum(defined) / len(defined))


def _pooled_pairs(pred: RankedPredictions):
    rows, cols = np.nonzero(pred.verified)
    scores = pred.scores[rows, cols]
    truth = pred.truth[rows, cols]
    # lexicographic (sample id, class) as the pooled tie-break key
    keys = pred.sample_ids[rows].astype(np.int64) * pred.class_count + cols
    return scores, truth, keys


def ap_all(pred: RankedPredictions) -> float | None:
    """Class-agnostic AP over all verified pairs pooled into one ranking."""
    scores, truth, keys = _pooled_pairs(pred)
    if scores.size == 0:
        return None
    return average_precision(scores, truth, tie_ids=keys)


def pr_curve(pred: RankedPredictions, granularity: int = 200) -> list[PRPoint]:
    """Precision/recall at each distinct score threshold, thinned to at most
    `granularity` points; the final point always covers every verified pair."""
    if granularity < 1:
        raise UsageError(f"pr_curve: granularity must be >= 1, got {granularity}")
    scores, truth, keys = _pooled_pairs(pred)
    positives = int(np.count_nonzero(truth == 1))
    if positives == 0:
        raise UsageError("pr_curve: no verified positive pairs")
    order = np.lexsort((keys, -scores))
    sorted_scores = scores[order]
    rel = (truth[order] == 1).astype(np.float64)
    tp = np.cumsum(rel)
    n = scores.size
    # last index of each tie group = one point per distinct threshold
    ends = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.append(ends, n - 1)
    points = [
        PRPoint(
            threshold=float(sorted_scores[i]),
            recall=float(tp[i] / positives),
            precision=float(tp[i] / (i + 1)),
        )
        for i in ends
    ]
    if len(points) > granularity:
        keep = np.unique(np.round(np.linspace(0, len(points) - 1, granularity)).astype(int))
        points = [points[i] for i in keep]
    return points


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary for one model on one verified split."""

    per_class_ap: tuple
    map: float
    ap_all: float
    defined_classes: int
    undefined_classes: int
    pr_points: tuple = field(default_factory=tuple)


def build_report(pred: RankedPredictions, granularity: int = 200) -> MetricsReport:
    aps = per_class_average_precision(pred)
    defined = sum(1 for ap in aps if ap is not None)
    return MetricsReport(
        per_class_ap=tuple(aps),
        map=mean_average_precision(aps),
        ap_all=ap_all(pred),
        defined_classes=defined,
        undefined_classes=len(aps) - defined,
        pr_points=tuple(pr_curve(pred, granularity)),
    )


def decile_breakdown(
    report: MetricsReport,
    reference: MetricsReport,
    key_values,
    groups: int = 10,
) -> list[float | None]:
    """Per-group MAP difference (report minus reference) after sorting classes
    ascending by key; the remainder classes go to the leading groups."""
    if len(report.per_class_ap) != len(reference.per_class_ap):
        raise UsageError(
            f"decile_breakdown: vocabulary mismatch, {len(report.per_class_ap)} vs "
            f"{len(reference.per_class_ap)} classes"
        )
    key = np.asarray(key_values, dtype=np.float64)
    if key.shape != (len(report.per_class_ap),):
        raise UsageError(f"decile_breakdown: key shape {key.shape} does not cover every class")
    if groups < 1:
        raise UsageError(f"decile_breakdown: groups must be >= 1, got {groups}")
    order = np.argsort(key, kind="stable")
    base, rem = divmod(order.size, groups)
    deltas: list[float | None] = []
    start = 0
    for g in range(groups):
        size = base + (1 if g < rem else 0)
        chunk = order[start : start + size]
        start += size
        a = [report.per_class_ap[c] for c in chunk if report.per_class_ap[c] is not None]
        b = [reference.per_class_ap[c] for c in chunk if reference.per_class_ap[c] is not None]
        if not a or not b:
            deltas.append(None)
            continue
        deltas.append(float(sum(a) / len(a) - sum(b) / len(b)))
    return deltas


def write_summary_csv(path, rows: Sequence[dict]) -> None:
    """Rows of {variant, map, ap_all, defined_classes, undefined_classes}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "map", "ap_all", "defined_classes", "undefined_classes"])
        for row in rows:
            writer.writerow(
                [
                    row["variant"],
                    repr(float(row["map"])),
                    repr(float(row["ap_all"])),
                    row["defined_classes"],
                    row["undefined_classes"],
                ]
            )


def write_per_class_csv(path, class_names: Sequence[str], report: MetricsReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class_index", "class_name", "average_precision"])
        for i, (name, ap) in enumerate(zip(class_names, report.per_class_ap)):
            writer.writerow([i, name, "" if ap is None else repr(float(ap))])


def write_pr_tsv(path, points: Sequence[PRPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["threshold", "recall", "precision"])
        for p in points:
            writer.writerow([repr(p.threshold), repr(p.recall), repr(p.precision)])


def write_decile_csv(path, rows: Sequence[dict], variants: Sequence[str]) -> None:
    """Rows of {group, lo, hi, <variant deltas>}; one row per group."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "key_lo", "key_hi"] + [f"delta_{v}" for v in variants])
        for row in rows:
            out = [row["group"], repr(float(row["lo"])), repr(float(row["hi"]))]
            for v in variants:
                d = row[v]
                out.append("" if d is None else repr(float(d)))
            writer.writerow(out)
