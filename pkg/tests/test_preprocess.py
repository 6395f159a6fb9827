import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_ctx
from lahar.ingest import DayRows
from lahar.model import Change, SensorEvent
from lahar.preprocess import (
    FilterRule,
    UnknownSensor,
    apply_filters,
    debounce,
    detect_events,
    pair_events,
    preprocess,
    render_pairs_json,
)
from oracles import debounce_oracle, pairs_oracle

CTX = tiny_ctx()
SIDS = CTX.sensor_ids


def rows_from(values):
    values = np.asarray(values, dtype=np.int8)
    return DayRows(np.arange(len(values), dtype=np.int64), values, np.ones((len(values), 2), dtype=np.int16))


def ev(t, s, c):
    return SensorEvent(t, s, Change(c))


event_streams = st.lists(
    st.tuples(st.integers(1, 5), st.sampled_from(SIDS), st.sampled_from(["ON", "OFF"])), max_size=60
).map(lambda xs: [ev(t, s, c) for t, s, c in _cumulative(xs)])


def _cumulative(xs):
    t = 0
    for gap, s, c in xs:
        t += gap
        yield t, s, c


reading_grids = st.integers(2, 80).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 1), min_size=5, max_size=5), min_size=n, max_size=n)
)


def test_detect_on_constant_stream_is_empty():
    assert detect_events(rows_from([[1, 0, 1, 0, 0]] * 30), CTX) == []


def test_detect_orders_ties_by_column():
    rows = rows_from([[0, 0, 0, 0, 0], [1, 0, 0, 1, 0], [0, 0, 0, 1, 0]])
    assert [(e.t, e.sensor, e.change.value) for e in detect_events(rows, CTX)] == [
        (1, "S0", "ON"), (1, "S3", "ON"), (2, "S0", "OFF"),
    ]


def test_debounce_collapses_uninterrupted_run():
    run = [ev(t, "S1", "ON" if t % 2 else "OFF") for t in range(1, 8)]
    assert debounce(run) == [run[0], run[-1]]


def test_debounce_keeps_interrupted_run():
    xs = [ev(1, "S1", "ON"), ev(2, "S1", "OFF"), ev(3, "S2", "ON"), ev(4, "S1", "ON")]
    assert debounce(xs) == xs


@given(event_streams)
def test_debounce_matches_oracle_and_is_idempotent(events):
    once = debounce(events)
    assert once == debounce_oracle(events)
    assert debounce(once) == once


@given(event_streams, st.integers(0, 3), st.integers(1, 10))
def test_pairs_match_oracle(events, lead, tail):
    if events:
        span = (max(0, events[0].t - lead), events[-1].t + tail)
    else:
        span = (0, tail)
    got = [(p.start, p.end, p.sensor, p.synthetic) for p in pair_events(events, CTX, span)]
    assert got == pairs_oracle(events, span)


@given(event_streams)
def test_pairs_are_ordered_and_disjoint_per_sensor(events):
    span = (0, (events[-1].t + 1) if events else 1)
    pairs = pair_events(events, CTX, span)
    assert all(p.start <= p.end for p in pairs)
    for sid in SIDS:
        mine = [p for p in pairs if p.sensor == sid]
        assert all(a.end <= b.start for a, b in zip(mine, mine[1:]))


def test_dangling_events_close_at_segment_edges():
    xs = [ev(5, "S1", "OFF"), ev(7, "S2", "ON")]
    pairs = pair_events(xs, CTX, (2, 20))
    assert [(p.start, p.end, p.sensor, p.synthetic) for p in pairs] == [
        (2, 5, "S1", "open"), (7, 20, "S2", "close"),
    ]


def test_repeated_on_is_absorbed_and_stray_off_extends():
    xs = [ev(1, "S1", "ON"), ev(3, "S1", "ON"), ev(5, "S1", "OFF"), ev(9, "S1", "OFF")]
    assert [(p.start, p.end) for p in pair_events(xs, CTX, (0, 10))] == [(1, 9)]


@given(reading_grids)
@settings(max_examples=200)
def test_pairs_agree_with_per_second_state(grid):
    """Pairs start on a second the sensor reads 1 and end on one it reads 0 (or at the span edge),
    and every second a sensor reads 1 is covered, unless that sensor never changes."""
    rows = rows_from(grid)
    events, pairs = preprocess(rows, CTX)
    span = (0, len(grid))
    vals = np.asarray(grid)
    for p in pairs:
        col = SIDS.index(p.sensor)
        assert vals[p.start, col] == 1
        if p.synthetic == "close":
            assert p.end == span[1] and vals[-1, col] == 1
        else:
            assert vals[p.end, col] == 0
    changed = {e.sensor for e in events}
    for col, sid in enumerate(SIDS):
        if sid not in changed:
            continue
        covered = np.zeros(len(grid), dtype=bool)
        for p in pairs:
            if p.sensor == sid:
                covered[p.start : p.end] = True
        assert not (vals[:, col].astype(bool) & ~covered).any()


def test_drop_always_and_coactive_window():
    xs = [ev(10, "S0", "ON"), ev(20, "S1", "ON"), ev(400, "S2", "ON"), ev(900, "S2", "OFF")]
    rules = [FilterRule("DROP_ALWAYS", "S0"), FilterRule("DROP_UNLESS_COACTIVE", "S2", {"S1"}, 300)]
    assert apply_filters(xs, rules) == [xs[1]]
    rules[1] = FilterRule("DROP_UNLESS_COACTIVE", "S2", {"S1"}, 380)
    assert apply_filters(xs, rules) == [xs[1], xs[2]]


@given(event_streams, st.sets(st.sampled_from(SIDS), max_size=2), st.integers(1, 20))
def test_filtering_keeps_order(events, co, window):
    kept = apply_filters(events, [FilterRule("DROP_UNLESS_COACTIVE", "S4", co or {"S0"}, window)])
    it = iter(events)
    assert all(any(k is e for e in it) for k in kept)


def test_filter_with_unknown_sensor_is_rejected():
    with pytest.raises(UnknownSensor):
        apply_filters([], [FilterRule("DROP_ALWAYS", "Zz9")], SIDS)


def test_render_pairs_json_layout():
    pairs = pair_events([ev(5, "S1", "ON"), ev(9, "S1", "OFF")], CTX, (0, 20))
    text = render_pairs_json(pairs)
    assert text.startswith("[\n  {") and text.endswith("}\n]")
    assert json.loads(text) == [
        {"start": "00:00:05", "end": "00:00:09", "event": "S1 ON and OFF", "location": "Kitchen"}
    ]
    assert render_pairs_json([]) == "[]"
