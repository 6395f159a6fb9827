import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_ctx
from lahar.llm import Backend, BackendUnavailable, ContextTooLong, RateLimited, Transcript
from lahar.mock import ScriptedBackend
from lahar.model import UNASSIGNED, ActionDescription, ActivityRecord, EventPair, Scenario, Segment
from lahar.pipeline import RunSettings, assemble_timeline, run_segment, run_stage1, split_by_subject

CTX = tiny_ctx()


def pairs_at(starts, sensors=None):
    out = []
    for i, s in enumerate(sorted(starts)):
        sid = (sensors or [f"S{j % 5}" for j in range(len(starts))])[i]
        out.append(EventPair(s, s + 3, sid, CTX.location_of(sid)))
    return out


def segment(pairs, residents=("User 1", "User 2"), span=None):
    span = span or (0, max([p.end for p in pairs] + [1]) + 1)
    scen = Scenario.SINGLE if len(residents) == 1 else Scenario.MULTI
    return Segment("T-d01-01", "T", span, scen, tuple(residents), (), tuple(pairs))


class Flaky(Backend):
    """Wraps a backend; the listed call numbers (1-based) answer with ``bad`` instead."""

    def __init__(self, inner, bad_calls, bad="no json here"):
        self.inner, self.bad_calls, self.bad, self.n = inner, set(bad_calls), bad, 0

    def _complete(self, req):
        self.n += 1
        if self.n in self.bad_calls:
            if isinstance(self.bad, Exception):
                raise self.bad
            return self.bad, {}
        return self.inner._complete(req)


def ceil(a, b):
    return -(-a // b)


@given(st.lists(st.integers(0, 5000), min_size=1, max_size=70, unique=True), st.integers(1, 25), st.integers(1, 10))
@settings(max_examples=40, deadline=None)
def test_call_count_matches_chunk_arithmetic(starts, n, m):
    seg = segment(pairs_at([10 * s for s in starts]))
    tr = Transcript()
    res = run_segment(seg, CTX, ScriptedBackend(CTX), RunSettings(n=n, m=m), tr)
    per_subject = split_by_subject(res.stage1.descriptions, CTX.residents)
    want = ceil(len(seg.pairs), n) + sum(ceil(len(d), m) for d in per_subject.values())
    assert res.calls == want == len(tr.entries)
    assert not res.stage1.failed_chunks and not res.stage2.failed_chunks
    assert set(res.timelines) == set(CTX.residents)
    for tl in res.timelines.values():
        assert all(seg.span[0] <= e.start < e.end <= seg.span[1] for e in tl.entries)
        assert all(e.activity in CTX.activity_ids() for e in tl.entries)


def test_stage1_chunks_run_in_order_with_carry_over():
    seg = segment(pairs_at(range(0, 2500, 50)))
    tr = Transcript()
    run_stage1(seg.id, seg.pairs, CTX, ScriptedBackend(CTX), RunSettings(n=10), 0, tr)
    firsts = [e.request.user.split("## Input\n", 1)[1].split('"start": "', 1)[1][:8] for e in tr.entries]
    assert firsts == sorted(firsts)
    assert "no prior state" in tr.entries[0].request.user
    assert "Activity in" in tr.entries[1].request.user.split("## Previous State", 1)[1].split("## Input", 1)[0]


def test_one_repair_then_success():
    seg = segment(pairs_at([0, 100]))
    backend = Flaky(ScriptedBackend(CTX), {1})
    tr = Transcript()
    res = run_stage1(seg.id, seg.pairs, CTX, backend, RunSettings(), 0, tr)
    assert res.calls == 2 and not res.failed_chunks and res.descriptions
    assert "## Repair" in tr.entries[1].request.user
    assert "no json here" in tr.entries[1].request.user


def test_failed_repair_skips_chunk_and_keeps_carry():
    seg = segment(pairs_at(range(0, 400, 10)))
    backend = Flaky(ScriptedBackend(CTX), {2, 3})
    tr = Transcript()
    res = run_stage1(seg.id, seg.pairs, CTX, backend, RunSettings(n=10), 0, tr)
    assert [f[0] for f in res.failed_chunks] == [2]
    assert res.calls == 5
    prev = lambda e: e.request.user.split("## Previous State", 1)[1].split("## Input", 1)[0]  # noqa: E731
    # chunk 3 sees the same carry-over as the failed chunk 2
    assert prev(tr.entries[3]) == prev(tr.entries[1])


def test_context_too_long_fails_only_that_chunk():
    seg = segment(pairs_at(range(0, 300, 10)))
    backend = Flaky(ScriptedBackend(CTX), {1}, ContextTooLong("too long"))
    res = run_stage1(seg.id, seg.pairs, CTX, backend, RunSettings(n=10), 0)
    assert [f[0] for f in res.failed_chunks] == [1] and res.calls == 3


def test_backend_outage_aborts():
    seg = segment(pairs_at([0]))
    with pytest.raises(BackendUnavailable):
        run_segment(seg, CTX, Flaky(ScriptedBackend(CTX), {1}, BackendUnavailable("down")), RunSettings())
    with pytest.raises(BackendUnavailable):
        run_segment(seg, CTX, Flaky(ScriptedBackend(CTX), {1}, RateLimited("slow")), RunSettings())


def test_single_segment_uses_present_resident_only():
    seg = segment(pairs_at([0, 100]), residents=("User 2",))
    tr = Transcript()
    res = run_segment(seg, CTX, ScriptedBackend(CTX), RunSettings(), tr)
    assert set(res.timelines) == {"User 2"}
    assert "User 1" not in tr.entries[0].request.system


def desc(subject, start=0):
    return ActionDescription(start, start + 5, {}, "Kitchen", subject, "x")


def test_unassigned_goes_to_everyone_or_nobody():
    ds = [desc("User 1"), desc(UNASSIGNED, 10), desc("User 2", 20)]
    everyone = split_by_subject(ds, ["User 1", "User 2"], "all")
    assert [len(v) for v in everyone.values()] == [2, 2]
    dropped = split_by_subject(ds, ["User 1", "User 2"], "drop")
    assert [len(v) for v in dropped.values()] == [1, 1]


def test_assemble_clips_dedups_and_sorts():
    recs = [
        ActivityRecord(50, 500, 450, "", "", 2),
        ActivityRecord(0, 40, 40, "", "", 1),
        ActivityRecord(0, 40, 40, "", "", 1),
        ActivityRecord(30, 60, 30, "", "", 2),
        ActivityRecord(700, 800, 100, "", "", 1),
    ]
    tl = assemble_timeline(recs, (10, 200), "User 1")
    assert [(e.start, e.end, e.activity) for e in tl.entries] == [(10, 40, 1), (30, 60, 2), (50, 200, 2)]
