"""Figures for cross-validation reports (rendered to files, never shown)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed metadata keeps repeated renders byte-identical.
_PNG_METADATA = {"Software": None}
_SVG_METADATA = {"Date": None, "Creator": None}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "picrules",
}


def _save(fig, path: Path) -> None:
    suffix = path.suffix.lower()
    if suffix == ".svg":
        fig.savefig(path, metadata=_SVG_METADATA)
    elif suffix == ".pdf":
        fig.savefig(path, metadata={"CreationDate": None, "Creator": None, "Producer": None})
    else:
        fig.savefig(path, dpi=150, metadata=_PNG_METADATA)


def plot_rule_histogram(
    hist: Sequence[tuple[str, int]],
    path: str | Path,
    title: str | None = None,
    top: int | None = 40,
) -> Path:
    """Horizontal bar chart of how often each returned rule was used."""
    path = Path(path)
    rows = list(hist[:top] if top else hist)
    with plt.rc_context(STYLE):
        height = max(2.0, 0.22 * len(rows) + 1.0)
        fig, ax = plt.subplots(figsize=(8.0, height))
        if rows:
            labels = [t for t, _ in rows][::-1]
            counts = [n for _, n in rows][::-1]
            ax.barh(range(len(rows)), counts, color="#4c72b0")
            ax.set_yticks(range(len(rows)))
            ax.set_yticklabels(labels)
        else:
            ax.text(0.5, 0.5, "no rules returned", ha="center", va="center", transform=ax.transAxes)
            ax.set_yticks([])
        ax.set_xlabel("times returned")
        if title:
            ax.set_title(title)
        if top and len(hist) > top:
            ax.annotate(f"{len(hist) - top} more rules not shown", xy=(1.0, 0.0),
                        xycoords="axes fraction", ha="right", va="bottom", fontsize=7)
        fig.tight_layout()
        _save(fig, path)
        plt.close(fig)
    return path


def plot_accuracy_runs(per_run: Sequence[float], path: str | Path, title: str | None = None) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.plot(range(1, len(per_run) + 1), per_run, marker="o", color="#4c72b0")
        ax.set_xlabel("repeat")
        ax.set_ylabel("accuracy")
        ax.set_xticks(range(1, len(per_run) + 1))
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
        plt.close(fig)
    return path
