from lahar.evaluator import report_from_tally, score_segment
from lahar.model import Timeline, TimelineEntry
from lahar.plots import confusion_figure, letter_codes, timeline_figure


def test_letter_codes_reserve_x_for_unknown():
    codes = letter_codes([f"c{i}" for i in range(25)])
    assert codes[-1] == "X" and "X" not in codes[:-1] and len(set(codes)) == 26


def test_figures_are_written_deterministically(tmp_path):
    ids, labels = [0, 1, 2], ["Other", "Cooking", "Sleeping"]
    tl = {"u": Timeline("u", (TimelineEntry(0, 30, 1), TimelineEntry(40, 60, 2)))}
    truth = {"u": [1] * 35 + [2] * 25}
    rep = report_from_tally("Single_A", score_segment(tl, truth, (0, 60), ids), ids, labels)
    paths = []
    for n in (1, 2):
        paths.append(confusion_figure(rep, tmp_path / f"c{n}.png"))
        paths.append(timeline_figure("seg", (0, 60), tl, truth, dict(zip(ids, labels)), tmp_path / f"t{n}.png"))
    assert paths[0].read_bytes()[:4] == b"\x89PNG"
    assert paths[0].read_bytes() == paths[2].read_bytes()
    assert paths[1].read_bytes() == paths[3].read_bytes()
