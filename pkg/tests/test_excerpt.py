"""Replay of the hand-written House B evening excerpt."""

import json

from conftest import EXCERPT
from lahar import cli
from lahar.llm import ReplayBackend, Transcript, read_transcripts
from lahar.pipeline import RunSettings, run_segment
from regen_golden import EXCERPT_ACTIVITIES, excerpt_segment


def _run(cfg_b):
    seg = excerpt_segment(cfg_b.ctx)
    settings = RunSettings(
        stage1_examples=cfg_b.run.stage1_examples, stage2_examples=cfg_b.run.stage2_examples,
        templates=cfg_b.run.templates(), model=cfg_b.run.model,
    )
    backend = ReplayBackend(read_transcripts([EXCERPT / "transcript.jsonl"]), strict=True)
    return seg, run_segment(seg, cfg_b.ctx, backend, settings, Transcript())


def test_excerpt_yields_nine_descriptions(cfg_b):
    seg, res = _run(cfg_b)
    assert len(seg.pairs) == 22
    assert len(res.stage1.descriptions) == 9
    assert {d.subject for d in res.stage1.descriptions} == {"User 1", "User 2"}


def test_excerpt_records_per_resident(cfg_b):
    _, res = _run(cfg_b)
    for subject, rows in EXCERPT_ACTIVITIES.items():
        assert [r.activity for r in res.stage2.records[subject]] == [row[-1] for row in rows]
    assert not res.stage1.failed_chunks and not res.stage2.failed_chunks


def test_excerpt_result_matches_committed(cfg_b):
    _, res = _run(cfg_b)
    want = (EXCERPT / "result.json").read_text(encoding="utf-8")
    assert cli.dump_json(res.to_dict()) == want
    assert json.loads(want)["segment"] == "B-d05-excerpt"
