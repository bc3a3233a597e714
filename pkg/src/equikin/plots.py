"""Standalone SVG line charts of mean curves versus percent stride."""

from __future__ import annotations

import io as _io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed salt and no creation date so identical data give identical SVG text;
# text stays text so that no glyph paths depend on the installed fonts.
_RC = {"svg.hashsalt": "equikin", "svg.fonttype": "none", "font.size": 8.0,
       "axes.linewidth": 0.6, "lines.linewidth": 1.0}


def line_chart(percent, curves: dict[str, tuple[np.ndarray, np.ndarray]], title: str,
               ylabel: str, boundary: float | None = None) -> str:
    """SVG text of one panel per curve: mean line, +/- 1 s.d. band, phase boundary.

    ``curves`` maps a panel label to ``(mean, sd)`` arrays on ``percent``.
    """
    labels = list(curves)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(max(len(labels), 1), 1, figsize=(5.0, 1.6 * max(len(labels), 1)),
                                 sharex=True, squeeze=False)
        for ax, label in zip(axes[:, 0], labels):
            mean, sd = (np.asarray(a, dtype=float) for a in curves[label])
            ax.fill_between(percent, mean - sd, mean + sd, color="0.85", linewidth=0)
            ax.plot(percent, mean, color="k")
            ax.axhline(0.0, color="0.6", linewidth=0.5)
            if boundary is not None:
                ax.axvline(boundary, color="0.3", linestyle="--", linewidth=0.7)
            ax.set_ylabel(label)
            ax.set_xlim(percent[0], percent[-1])
        axes[0, 0].set_title(f"{title} [{ylabel}]")
        axes[-1, 0].set_xlabel("% stride")
        fig.tight_layout()
        buf = _io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_line_chart(path: str | Path, *args, **kwargs) -> None:
    text = line_chart(*args, **kwargs)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
