"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

from fractions import Fraction
from itertools import groupby

from lahar.model import Change


def debounce_oracle(events):
    """Keep an event unless it sits strictly inside a same-sensor run of length >= 3."""
    out = []
    for _, run in groupby(events, key=lambda e: e.sensor):
        run = list(run)
        out.extend(run if len(run) < 3 else [run[0], run[-1]])
    return out


def pairs_oracle(events, span):
    """Per sensor, alternate runs of ON and OFF events.

    An ON run opens at its first event and the OFF run after it closes at its
    last event. A leading OFF run opens at the span start, a trailing ON run
    closes at the span end. Result: sorted (start, end, sensor, synthetic).
    """
    t_s, t_e = span
    out = []
    for sensor in {e.sensor for e in events}:
        mine = [e for e in events if e.sensor == sensor]
        runs = [(change, [e.t for e in grp]) for change, grp in groupby(mine, key=lambda e: e.change)]
        k = 0
        if runs and runs[0][0] is Change.OFF:
            out.append((t_s, runs[0][1][-1], sensor, "open"))
            k = 1
        while k < len(runs):
            on_times = runs[k][1]
            if k + 1 < len(runs):
                out.append((on_times[0], runs[k + 1][1][-1], sensor, None))
            else:
                out.append((on_times[0], max(t_e, on_times[0]), sensor, "close"))
            k += 2
    return sorted(out, key=lambda p: (p[0], p[2]))


def score_oracle(pred, truth):
    """Per-class (tp, fp, fn) by visiting every (t, k) cell."""
    t_len = len(truth)
    k = len(truth[0]) if t_len else 0
    tp, fp, fn = [0] * k, [0] * k, [0] * k
    for t in range(t_len):
        for j in range(k):
            p, g = int(pred[t][j]), int(truth[t][j])
            if p and g:
                tp[j] += 1
            elif p:
                fp[j] += 1
            elif g:
                fn[j] += 1
    return tp, fp, fn


def confusion_oracle(pred, truth):
    """Exact fractional confusion mass; index K is Unknown."""
    k = len(truth[0])
    m = [[Fraction(0)] * (k + 1) for _ in range(k + 1)]
    for prow, grow in zip(pred, truth):
        predicted = [j for j in range(k) if prow[j]]
        actual = [j for j in range(k) if grow[j]] or [k]
        for g in actual:
            if g < k and g in predicted:
                m[g][g] += 1
            elif predicted:
                for p in predicted:
                    m[g][p] += Fraction(1, len(predicted))
            else:
                m[g][k] += 1
    return m
