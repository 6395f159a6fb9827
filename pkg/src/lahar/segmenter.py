"""Presence-based segmentation and label regrouping."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .ingest import DayRows
from .model import HouseContext, LabelMap, Scenario, Segment, day_of
from .preprocess import FilterRule, preprocess

DEFAULT_MIN_LEN = 120


class UnmappedLabel(KeyError):
    pass


def regroup_labels(rows: DayRows, label_map: LabelMap) -> DayRows:
    labels = rows.labels
    if labels.size == 0:
        return DayRows(rows.t, rows.values, labels.copy())
    top = max(int(labels.max()), max(label_map.raw_to_grouped, default=0))
    lut = np.full(top + 1, -1, dtype=np.int64)
    for raw, grouped in label_map.raw_to_grouped.items():
        lut[raw] = grouped
    if labels.min() < 0:
        raise UnmappedLabel(int(labels.min()))
    mapped = lut[labels]
    if (mapped < 0).any():
        raise UnmappedLabel(int(labels[mapped < 0][0]))
    return DayRows(rows.t, rows.values, mapped.astype(labels.dtype))


def presence_runs(labels: np.ndarray, away_ids: Iterable[int]) -> list[tuple[int, int, tuple[int, ...]]]:
    """Maximal runs ``[lo, hi)`` of row indices over which the set of present residents is constant."""
    if len(labels) == 0:
        return []
    present = ~np.isin(labels, np.fromiter(away_ids, dtype=np.int64))
    change = np.flatnonzero((present[1:] != present[:-1]).any(axis=1)) + 1
    bounds = [0, *change.tolist(), len(labels)]
    return [
        (lo, hi, tuple(np.flatnonzero(present[lo]).tolist()))
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]


def split_segments(
    rows: DayRows,
    away_ids: Iterable[int],
    min_len: int,
    ctx: HouseContext,
    label_map: LabelMap,
    rules: Sequence[FilterRule] = (),
) -> list[Segment]:
    """Cut ``rows`` into SINGLE / MULTI segments; nobody home and short runs are dropped.

    ``rows`` must be contiguous in time. Labels are expected raw; the segment's
    ground truth is regrouped through ``label_map``.
    """
    away_ids = list(away_ids)
    grouped = regroup_labels(rows, label_map)
    segments: list[Segment] = []
    per_day: dict[int, int] = {}
    for lo, hi, present in presence_runs(rows.labels, away_ids):
        if not present or hi - lo < min_len:
            continue
        if len(present) > 2 or max(present) >= len(ctx.residents):
            raise ValueError(f"presence columns {present} exceed residents {ctx.residents}")
        block = rows.slice(lo, hi)
        span = (int(block.t[0]), int(block.t[-1]) + 1)
        names = tuple(ctx.residents[i] for i in present)
        events, pairs = preprocess(block, ctx, rules, span)
        day = day_of(span[0])
        per_day[day] = per_day.get(day, 0) + 1
        segments.append(
            Segment(
                id=f"{ctx.house_id}-d{day + 1:02d}-{per_day[day]:02d}",
                house_id=ctx.house_id,
                span=span,
                scenario=Scenario.SINGLE if len(names) == 1 else Scenario.MULTI,
                present_residents=names,
                events=tuple(events),
                pairs=tuple(pairs),
                ground_truth={ctx.residents[i]: grouped.labels[lo:hi, i].astype(np.int64) for i in present},
            )
        )
    return segments


def segment_house(
    days,
    away_ids: Iterable[int],
    min_len: int,
    ctx: HouseContext,
    label_map: LabelMap,
    rules: Sequence[FilterRule] = (),
) -> list[Segment]:
    """Segment either one concatenated block or a list of independent day blocks."""
    if isinstance(days, DayRows):
        return split_segments(days, away_ids, min_len, ctx, label_map, rules)
    out: list[Segment] = []
    for day in days:
        out.extend(split_segments(day, away_ids, min_len, ctx, label_map, rules))
    return out
