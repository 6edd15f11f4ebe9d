"""SVG figures for reports: decay series on log-log axes and root branches.

Figures are rendered with the Agg backend and written with a fixed hash salt
and no date metadata, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

STYLE = {
    "svg.hashsalt": "hypdecay",
    "svg.fonttype": "none",
    "font.family": "sans-serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "path.simplify": False,
}


def figure(width: float = 5.0, height: float | None = None):
    height = height or width * GOLDEN
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def save_svg(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def series_chart(curves, path, title: str = "", fits=()) -> Path:
    """Log-log chart of norm series.

    ``curves`` holds (label, times, values); ``fits`` holds (label, times,
    model values) drawn dashed.
    """
    with plt.rc_context(STYLE):
        fig, ax = figure()
        for label, t, v in curves:
            ax.loglog(t, v, marker="o", ms=2.5, label=label)
        for label, t, v in fits:
            ax.loglog(t, v, ls="--", lw=0.9, color="0.3", label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("norm surrogate")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
    return save_svg(fig, path)


def roots_chart(field, path, title: str = "") -> Path:
    """Branches against xi in 1-D; the smallest Im tau as an image in 2-D."""
    grid = field.grid
    with plt.rc_context(STYLE):
        if grid.n == 1:
            fig, (a1, a2) = plt.subplots(2, 1, figsize=(5.0, 5.0), sharex=True)
            x = grid.axis
            for k in range(field.m):
                a1.plot(x, field.branches[k].real, lw=0.9)
                a2.plot(x, field.branches[k].imag, lw=0.9)
            a1.set_ylabel("Re tau")
            a2.set_ylabel("Im tau")
            a2.set_xlabel("xi")
            a2.axhline(0.0, color="0.6", lw=0.6)
        else:
            fig, a1 = figure(4.5, 4.0)
            if grid.n == 2:
                img = field.on_grid(field.min_im())
            else:
                mid = grid.points_per_axis // 2
                img = field.on_grid(field.min_im())[(slice(None), slice(None)) + (mid,) * (grid.n - 2)]
            ext = [-grid.extent, grid.extent, -grid.extent, grid.extent]
            im = a1.imshow(img.T, origin="lower", extent=ext, cmap="viridis")
            fig.colorbar(im, ax=a1, label="min Im tau")
            a1.set_xlabel("xi_1")
            a1.set_ylabel("xi_2")
        if title:
            fig.suptitle(title)
    return save_svg(fig, path)


def snapshot_chart(x, snapshots, path, title: str = "") -> Path:
    """|u(x, t)| for a few times (1-D periodic solver output)."""
    with plt.rc_context(STYLE):
        fig, ax = figure()
        for t, u in snapshots:
            ax.plot(x, np.abs(u), lw=0.9, label=f"t={t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("|u|")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
    return save_svg(fig, path)
