"""Per-second multi-hot scoring of predicted timelines against ground truth."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import Timeline

UNKNOWN = "Unknown"
SCENARIO_ORDER = ("Single_A", "Multi_A", "Single_B", "Multi_B")


class ShapeMismatch(ValueError):
    pass


def encode(timeline: Timeline, span: tuple[int, int], activity_ids: Sequence[int]) -> np.ndarray:
    """``T x K`` 0/1 matrix; overlapping activities are unioned."""
    lo, hi = span
    col = {a: j for j, a in enumerate(activity_ids)}
    m = np.zeros((hi - lo, len(activity_ids)), dtype=np.int8)
    for e in timeline.entries:
        a, b = max(e.start, lo), min(e.end, hi)
        if a < b:
            m[a - lo : b - lo, col[e.activity]] = 1
    return m


def encode_labels(labels: Sequence[int], activity_ids: Sequence[int]) -> np.ndarray:
    """One-hot matrix for a single-label per-second sequence."""
    col = {a: j for j, a in enumerate(activity_ids)}
    labels = np.asarray(labels, dtype=np.int64)
    m = np.zeros((len(labels), len(activity_ids)), dtype=np.int8)
    if len(labels):
        lut = np.full(max(max(col), int(labels.max())) + 1, -1, dtype=np.int64)
        for a, j in col.items():
            lut[a] = j
        idx = lut[labels]
        if (idx < 0).any():
            raise KeyError(f"label {int(labels[idx < 0][0])} not in catalog")
        m[np.arange(len(labels)), idx] = 1
    return m


@dataclass
class ClassCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def zeros(cls, k: int) -> "ClassCounts":
        z = np.zeros(k, dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy())


def _check(pred: np.ndarray, truth: np.ndarray) -> None:
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs truth {truth.shape}")


def score(pred: np.ndarray, truth: np.ndarray) -> ClassCounts:
    _check(pred, truth)
    p = pred.astype(np.int64)
    g = truth.astype(np.int64)
    s = p * g
    return ClassCounts(s.sum(axis=0), (p - s).sum(axis=0), (g - s).sum(axis=0))


@dataclass(frozen=True)
class ClassScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def predicted(self) -> int:
        return self.tp + self.fp

    @property
    def present(self) -> bool:
        return self.support > 0 or self.predicted > 0


def class_score(tp: int, fp: int, fn: int) -> ClassScore:
    """Ratios with zero for an empty denominator."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScore(int(tp), int(fp), int(fn), precision, recall, f1)


def per_class(counts: ClassCounts, activity_ids: Sequence[int]) -> dict[int, ClassScore]:
    return {
        a: class_score(int(counts.tp[j]), int(counts.fp[j]), int(counts.fn[j]))
        for j, a in enumerate(activity_ids)
    }


def aggregate(scores: Mapping[int, ClassScore], exclude: Iterable[int] = ()) -> tuple[tuple, tuple]:
    """Macro and support-weighted (precision, recall, f1) over classes seen on either side."""
    exclude = set(exclude)
    rows = [s for a, s in scores.items() if a not in exclude and s.present]
    if not rows:
        return (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
    macro = tuple(float(np.mean([getattr(s, f) for s in rows])) for f in ("precision", "recall", "f1"))
    total = sum(s.support for s in rows)
    if total == 0:
        weighted = (0.0, 0.0, 0.0)
    else:
        weighted = tuple(
            sum(getattr(s, f) * s.support for s in rows) / total for f in ("precision", "recall", "f1")
        )
    return macro, weighted


def confusion_scale(k: int) -> int:
    """Common denominator for fractional credit: lcm(1..k)."""
    return math.lcm(*range(1, max(k, 1) + 1))


def confusion_units(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, int]:
    """Confusion mass as integers in units of ``1/scale``; last row/column is Unknown."""
    _check(pred, truth)
    t_len, k = truth.shape
    scale = confusion_scale(k)
    p = pred.astype(np.int64)
    g = truth.astype(np.int64)
    n_pred = p.sum(axis=1)
    w = np.where(n_pred > 0, scale // np.maximum(n_pred, 1), 0)
    hit = g * p
    miss = g - hit
    out = np.zeros((k + 1, k + 1), dtype=np.int64)
    out[np.arange(k), np.arange(k)] += hit.sum(axis=0) * scale
    out[:k, :k] += miss.T @ (p * w[:, None])
    out[:k, k] += (miss * (n_pred == 0)[:, None]).sum(axis=0) * scale
    empty_truth = g.sum(axis=1) == 0
    out[k, :k] += (p * (w * empty_truth)[:, None]).sum(axis=0)
    out[k, k] += int((empty_truth & (n_pred == 0)).sum()) * scale
    return out, scale


def confusion(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """``(K+1) x (K+1)`` confusion mass; the last index is Unknown.

    A truth class that is also predicted scores on the diagonal; otherwise its
    second is shared equally among the predicted classes, or goes to Unknown
    when nothing is predicted. Seconds without truth fill the Unknown row.
    """
    units, scale = confusion_units(pred, truth)
    return units / scale


@dataclass
class ScenarioTally:
    """Pooled counts for one scenario; merging is associative and commutative."""

    counts: ClassCounts
    confusion_units: np.ndarray
    scale: int
    segments: int = 0

    def __add__(self, other: "ScenarioTally") -> "ScenarioTally":
        assert self.scale == other.scale
        return ScenarioTally(
            self.counts + other.counts,
            self.confusion_units + other.confusion_units,
            self.scale,
            self.segments + other.segments,
        )

    @classmethod
    def empty(cls, k: int) -> "ScenarioTally":
        return cls(ClassCounts.zeros(k), np.zeros((k + 1, k + 1), dtype=np.int64), confusion_scale(k), 0)

    @property
    def confusion(self) -> np.ndarray:
        return self.confusion_units / self.scale


def match_subjects(
    preds: Mapping[str, np.ndarray],
    truths: Mapping[str, np.ndarray],
    mode: str = "identity",
) -> dict[str, str]:
    """Map predicted subject -> ground-truth resident.

    ``identity`` pairs equal names; ``best`` tries every assignment and keeps the
    one with the highest summed F1 (ties resolve to the first permutation tried).
    """
    names = list(truths)
    if mode == "identity" or len(names) < 2:
        return {n: n for n in names}
    best, best_f1 = None, -1.0
    for perm in permutations(names):
        total = 0.0
        for pred_name, truth_name in zip(names, perm):
            scores = per_class(score(preds[pred_name], truths[truth_name]), range(truths[truth_name].shape[1]))
            total += sum(s.f1 for s in scores.values() if s.present)
        if total > best_f1 + 1e-12:
            best, best_f1 = dict(zip(names, perm)), total
    return best


def score_segment(
    timelines: Mapping[str, Timeline],
    ground_truth: Mapping[str, Sequence[int]],
    span: tuple[int, int],
    activity_ids: Sequence[int],
    subject_mode: str = "identity",
) -> ScenarioTally:
    k = len(activity_ids)
    truths = {r: encode_labels(lbl, activity_ids) for r, lbl in ground_truth.items()}
    preds = {r: encode(timelines.get(r, Timeline(r)), span, activity_ids) for r in truths}
    mapping = match_subjects(preds, truths, subject_mode)
    tally = ScenarioTally.empty(k)
    for pred_name, truth_name in mapping.items():
        p, g = preds[pred_name], truths[truth_name]
        units, scale = confusion_units(p, g)
        tally = tally + ScenarioTally(score(p, g), units, scale, 0)
    tally.segments = 1
    return tally


@dataclass
class MetricsReport:
    scenario: str
    activity_ids: tuple[int, ...]
    labels: tuple[str, ...]
    per_class: dict[int, ClassScore]
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    confusion: np.ndarray
    segments: int = 0
    excluded: tuple[int, ...] = field(default_factory=tuple)


def report_from_tally(
    scenario: str,
    tally: ScenarioTally,
    activity_ids: Sequence[int],
    labels: Sequence[str],
    exclude: Iterable[int] = (0,),
) -> MetricsReport:
    exclude = tuple(exclude)
    scores = per_class(tally.counts, activity_ids)
    macro, weighted = aggregate(scores, exclude)
    return MetricsReport(
        scenario, tuple(activity_ids), tuple(labels), scores, macro, weighted,
        tally.confusion, tally.segments, exclude,
    )


# ---------------------------------------------------------------- rendering


def _pct(x: Optional[float]) -> str:
    return "/" if x is None else f"{100 * x:.2f}"


def per_class_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "class", "precision", "recall", "f1", "support"])
    for rep in reports:
        for a, label in zip(rep.activity_ids, rep.labels):
            if a in rep.excluded:
                continue
            s = rep.per_class[a]
            if not s.present:
                continue
            w.writerow([rep.scenario, label, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}", s.support])
        for name, agg in (("Macro-Average", rep.macro), ("Weighted-Average", rep.weighted)):
            w.writerow([rep.scenario, name, *(f"{v:.6f}" for v in agg), ""])
    return buf.getvalue()


def confusion_csv(rep: MetricsReport) -> str:
    """Long form ``truth,pred,mass``; only non-zero cells."""
    names = [*rep.labels, UNKNOWN]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["truth", "pred", "mass"])
    for i, gi in enumerate(names):
        for j, pj in enumerate(names):
            v = rep.confusion[i, j]
            if v:
                w.writerow([gi, pj, repr(float(v))])
    return buf.getvalue()


def _table_rows(reports: Mapping[str, MetricsReport], scenarios: Sequence[str]):
    any_rep = next(iter(reports.values()))
    rows = []
    for a, label in zip(any_rep.activity_ids, any_rep.labels):
        if a in any_rep.excluded:
            continue
        cells = []
        for metric in ("precision", "recall", "f1"):
            for sc in scenarios:
                rep = reports.get(sc)
                s = rep.per_class[a] if rep else None
                cells.append(getattr(s, metric) if s is not None and s.present else None)
        rows.append((label, cells))
    for name, attr in (("Macro-Average", "macro"), ("Weighted-Average", "weighted")):
        cells = []
        for idx in range(3):
            for sc in scenarios:
                rep = reports.get(sc)
                cells.append(getattr(rep, attr)[idx] if rep else None)
        rows.append((name, cells))
    return rows


def class_table_csv(reports: Mapping[str, MetricsReport], scenarios: Sequence[str] = SCENARIO_ORDER) -> str:
    """Per-class precision / recall / F1 in percent, one column per scenario per metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header1 = ["Metric"]
    for m in ("Precision (%)", "Recall (%)", "F1-score (%)"):
        header1 += [m] + [""] * (len(scenarios) - 1)
    w.writerow(header1)
    w.writerow(["Scenario", *list(scenarios) * 3])
    for label, cells in _table_rows(reports, scenarios):
        w.writerow([label, *(_pct(c) for c in cells)])
    return buf.getvalue()


def class_table_json(reports: Mapping[str, MetricsReport], scenarios: Sequence[str] = SCENARIO_ORDER) -> str:
    metrics = ("Precision", "Recall", "F1-score")
    rows = []
    for label, cells in _table_rows(reports, scenarios):
        entry = {"class": label}
        for mi, metric in enumerate(metrics):
            entry[metric] = {
                sc: (None if cells[mi * len(scenarios) + si] is None else round(100 * cells[mi * len(scenarios) + si], 2))
                for si, sc in enumerate(scenarios)
            }
        rows.append(entry)
    return json.dumps({"scenarios": list(scenarios), "metrics": list(metrics), "rows": rows}, indent=2) + "\n"


def class_table_text(reports: Mapping[str, MetricsReport], scenarios: Sequence[str] = SCENARIO_ORDER) -> str:
    """Fixed-width rendering of the table for terminals and logs."""
    rows = _table_rows(reports, scenarios)
    width = max(len("Weighted-Average"), *(len(r[0]) for r in rows))
    col = max(9, *(len(s) for s in scenarios))
    groups = ("Precision (%)", "Recall (%)", "F1-score (%)")
    span = (col + 1) * len(scenarios) - 1
    lines = [" " * width + " | " + " | ".join(g.center(span) for g in groups)]
    lines.append(
        "Scenario".ljust(width) + " | " + " | ".join(" ".join(s.rjust(col) for s in scenarios) for _ in groups)
    )
    lines.append("-" * len(lines[-1]))
    for label, cells in rows:
        parts = []
        for gi in range(3):
            chunk = cells[gi * len(scenarios) : (gi + 1) * len(scenarios)]
            parts.append(" ".join(_pct(c).rjust(col) for c in chunk))
        lines.append(label.ljust(width) + " | " + " | ".join(parts))
    return "\n".join(lines) + "\n"


def aggregate_json(reports: Sequence[MetricsReport]) -> str:
    out = {}
    for rep in reports:
        out[rep.scenario] = {
            "segments": rep.segments,
            "macro": dict(zip(("precision", "recall", "f1"), rep.macro)),
            "weighted": dict(zip(("precision", "recall", "f1"), rep.weighted)),
            "per_class": {
                label: {
                    "tp": s.tp, "fp": s.fp, "fn": s.fn,
                    "precision": s.precision, "recall": s.recall, "f1": s.f1,
                    "support": s.support,
                }
                for a, label in zip(rep.activity_ids, rep.labels)
                for s in [rep.per_class[a]]
                if s.present
            },
        }
    return json.dumps(out, indent=2) + "\n"
