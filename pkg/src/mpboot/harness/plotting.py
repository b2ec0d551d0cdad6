"""Deterministic SVG learning-curve plots."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import AggregateTable  # noqa: E402

RC = {
    "svg.hashsalt": "mpboot",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_plot(table, path, title=None, ylabel="normalized return"):
    """Mean line plus a one-standard-error band per condition.

    ``table`` maps condition label -> AggregateTable (an ordered list of
    ``(label, table)`` pairs works too). Same input, same bytes.
    """
    items = list(table.items()) if isinstance(table, dict) else list(table)
    if not items:
        raise ValueError("nothing to plot: no conditions")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for i, (label, t) in enumerate(items):
            if not isinstance(t, AggregateTable):
                raise TypeError(f"condition {label!r} is not an aggregate table")
            c = COLORS[i % len(COLORS)]
            band = ax.fill_between(t.epochs, t.mean - t.stderr, t.mean + t.stderr,
                                   color=c, alpha=0.25, linewidth=0)
            band.set_gid(f"band-{label}")
            (line,) = ax.plot(t.epochs, t.mean, color=c, lw=1.4, label=label)
            line.set_gid(f"series-{label}")
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
