"""Figures written next to the CSV reports."""

from __future__ import annotations

import string
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluator import MetricsReport  # noqa: E402
from .model import Timeline  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "font.family": "DejaVu Sans",
    "svg.hashsalt": "lahar",
}
# PNG metadata would otherwise carry the matplotlib version
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, metadata=_META)
    plt.close(fig)
    return path


def letter_codes(labels: Sequence[str]) -> list[str]:
    """``X`` for Unknown, then ``A``, ``B``, ... in catalog order."""
    letters = iter(string.ascii_uppercase.replace("X", "") + string.ascii_lowercase)
    return [next(letters) for _ in labels] + ["X"]


def confusion_figure(rep: MetricsReport, path: Path, keep_empty: bool = False) -> Path:
    """Row-normalised heatmap; Unknown first, as in the usual activity-recognition layout."""
    names = [*rep.labels, "Unknown"]
    codes = letter_codes(rep.labels)
    mat = rep.confusion
    order = [len(names) - 1, *range(len(names) - 1)]
    if not keep_empty:
        used = (mat.sum(axis=0) + mat.sum(axis=1)) > 0
        order = [i for i in order if used[i]]
    sub = mat[np.ix_(order, order)]
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(sub.sum(axis=1, keepdims=True) > 0, sub / sub.sum(axis=1, keepdims=True), 0.0)
    with plt.rc_context(STYLE):
        size = max(3.0, 0.35 * len(order) + 1.5)
        fig, ax = plt.subplots(figsize=(size + 3.0, size))
        im = ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
        ticks = [f"{codes[i]}" for i in order]
        ax.set_xticks(range(len(order)), ticks)
        ax.set_yticks(range(len(order)), ticks)
        ax.set_xlabel("Predicted")
        ax.set_ylabel("Ground truth")
        ax.set_title(f"{rep.scenario} ({rep.segments} segments)")
        for i in range(len(order)):
            for j in range(len(order)):
                if norm[i, j] >= 0.005:
                    ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center", fontsize=5,
                            color="white" if norm[i, j] > 0.6 else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        legend = "\n".join(f"{codes[i]}) {names[i]}" for i in order)
        fig.tight_layout(rect=(0, 0, 0.74, 1))
        fig.text(0.76, 0.5, legend, fontsize=6, va="center", ha="left")
        return _save(fig, path)


def timeline_figure(
    segment_id: str,
    span: tuple[int, int],
    predicted: Mapping[str, Timeline],
    truth: Mapping[str, Sequence[int]],
    labels: Mapping[int, str],
    path: Path,
) -> Path:
    """One lane pair (truth above prediction) per resident, time in hours from segment start."""
    lo, hi = span
    ids = sorted(labels)
    cmap = plt.get_cmap("tab20", max(len(ids), 1))
    colour = {a: cmap(i) for i, a in enumerate(ids)}
    residents = list(truth)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 0.9 + 0.7 * len(residents)))
        yticks, ylabels, seen = [], [], set()
        for ri, r in enumerate(residents):
            base = 2 * (len(residents) - 1 - ri)
            lab = np.asarray(truth[r])
            if len(lab):
                cuts = np.flatnonzero(np.diff(lab)) + 1
                starts = [0, *cuts.tolist()]
                ends = [*cuts.tolist(), len(lab)]
                for s, e in zip(starts, ends):
                    a = int(lab[s])
                    ax.broken_barh([(s / 3600, (e - s) / 3600)], (base + 1.05, 0.8), color=colour.get(a, "grey"))
                    seen.add(a)
            for ent in predicted.get(r, Timeline(r)).entries:
                ax.broken_barh(
                    [((ent.start - lo) / 3600, (ent.end - ent.start) / 3600)], (base + 0.15, 0.8),
                    color=colour.get(ent.activity, "grey"), alpha=0.85,
                )
                seen.add(ent.activity)
            yticks += [base + 0.55, base + 1.45]
            ylabels += [f"{r} predicted", f"{r} truth"]
        ax.set_yticks(yticks, ylabels)
        ax.set_xlim(0, (hi - lo) / 3600)
        ax.set_xlabel("hours since segment start")
        ax.set_title(segment_id)
        handles = [plt.Rectangle((0, 0), 1, 1, color=colour[a]) for a in ids if a in seen]
        ax.legend(handles, [f"{a}: {labels[a]}" for a in ids if a in seen],
                  loc="upper left", bbox_to_anchor=(1.01, 1.0), frameon=False)
        fig.tight_layout()
        return _save(fig, path)
