import json
import shutil

import pytest

from conftest import MINI
from lahar import cli


def ingest(out):
    assert cli.main(["ingest", "--house", "A", "--data", str(MINI), "--out", str(out)]) == 0


def test_ingest_writes_manifest_and_segments(tmp_path):
    ingest(tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    a = m["houses"]["A"]
    assert a["counts"] == {"SINGLE": 1, "MULTI": 2}
    for e in a["segments"]:
        seg = cli.segment_from_dict(json.loads((tmp_path / e["file"]).read_text()))
        assert len(seg.pairs) == e["pairs"]
        assert {len(v) for v in seg.ground_truth.values()} == {seg.length}
    assert not list(tmp_path.rglob("*.tmp"))


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli.main(["ingest", "--config", str(tmp_path / "gone.toml"), "--data", str(MINI), "--out", str(tmp_path)]) == 2
    assert "gone.toml" in capsys.readouterr().err


def test_bad_dataset_exits_3(tmp_path):
    data = tmp_path / "data"
    shutil.copytree(MINI, data)
    (data / "DAY_2.txt").write_text("1 2 3\n")
    assert cli.main(["ingest", "--house", "A", "--data", str(data), "--out", str(tmp_path / "o")]) == 3


def test_run_eval_and_scenario_filter(tmp_path):
    ingest(tmp_path)
    assert cli.main(["run", "--out", str(tmp_path), "--backend", "mock", "--segments", "A/day1,A-d02-01"]) == 0
    assert sorted(p.name for p in (tmp_path / "results").iterdir()) == ["A-d01-01.json", "A-d02-01.json"]
    # Multi_A still lacks A-d03-01
    assert cli.main(["eval", "--out", str(tmp_path), "--no-figures"]) == 5
    assert cli.main(["eval", "--out", str(tmp_path), "--scenario", "Single_A", "--no-figures"]) == 0
    assert (tmp_path / "reports" / "confusion_Single_A.csv").is_file()


def test_eval_on_empty_results_exits_5(tmp_path):
    ingest(tmp_path)
    assert cli.main(["eval", "--out", str(tmp_path), "--scenario", "Single_A"]) == 5


def test_replay_miss_exits_4_and_keeps_partial_results(tmp_path):
    ingest(tmp_path)
    rec = tmp_path / "rec"
    assert cli.main(["run", "--out", str(tmp_path), "--backend", "mock", "--segments", "A-d01-01"]) == 0
    shutil.copytree(tmp_path / "transcripts", rec)
    shutil.rmtree(tmp_path / "results")
    code = cli.main(["run", "--out", str(tmp_path), "--backend", "replay", "--transcript-dir", str(rec)])
    assert code == 4
    assert (tmp_path / "results" / "A-d01-01.json").is_file()
    assert not (tmp_path / "results" / "A-d03-01.json").exists()


def test_run_without_manifest_exits_2(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path), "--backend", "mock"]) == 2


def test_unknown_segment_selector_exits_2(tmp_path):
    ingest(tmp_path)
    assert cli.main(["run", "--out", str(tmp_path), "--backend", "mock", "--segments", "Z-d09-01"]) == 2


def test_window_restricts_segment(tmp_path):
    ingest(tmp_path)
    assert cli.main(["run", "--out", str(tmp_path), "--backend", "mock", "--segments", "A-d01-01",
                     "--window", "00:01:00-00:02:00"]) == 0
    res = json.loads((tmp_path / "results" / "A-d01-01.json").read_text())
    assert res["span"] == ["00:01:00", "00:02:01"]


def test_parallel_run_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, par in ((a, "1"), (b, "3")):
        ingest(out)
        assert cli.main(["run", "--out", str(out), "--backend", "mock", "--parallel", par]) == 0
    for f in (a / "results").iterdir():
        assert f.read_bytes() == (b / "results" / f.name).read_bytes()


def test_write_atomic_leaves_old_file_on_failure(tmp_path):
    target = tmp_path / "x.json"
    cli.write_atomic(target, "old\n")

    class Boom:
        def encode(self, _):
            raise RuntimeError("boom")

    with pytest.raises(Exception):
        cli.write_atomic(target, Boom())
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
