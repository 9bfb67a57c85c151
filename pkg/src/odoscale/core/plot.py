"""Top-down (x-z plane) trajectory plots written as static SVG."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib
from matplotlib.figure import Figure
from mpl_toolkits.axes_grid1.anchored_artists import AnchoredSizeBar

from odoscale.core.pose import Trajectory

# Fixed salt and no date stamp: identical inputs give identical bytes
SVG_RC = {"svg.hashsalt": "odoscale", "svg.fonttype": "path"}
SVG_METADATA = {"Date": None}


def scale_bar_length(extent: float) -> float:
    """Largest 1-2-5 step not above a fifth of the plotted extent."""
    if not extent > 0:
        return 1.0
    raw = extent / 5.0
    base = 10.0 ** math.floor(math.log10(raw))
    for multiple in (5.0, 2.0, 1.0):
        if multiple * base <= raw:
            return multiple * base
    return base


def build_figure(
    gt: Trajectory,
    preds: Sequence[tuple[str, Trajectory]] = (),
    gt_label: str = "ground truth",
) -> Figure:
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(6.0, 6.0))
        ax = fig.add_subplot()

        ax.plot(gt.positions[:, 0], gt.positions[:, 2], color="black", linestyle="--", label=gt_label)
        for label, traj in preds:
            ax.plot(traj.positions[:, 0], traj.positions[:, 2], label=label)
        ax.plot(
            [gt.positions[0, 0]], [gt.positions[0, 2]],
            marker="o", color="black", linestyle="none", label="start",
        )

        xs = [gt.positions[:, 0]] + [t.positions[:, 0] for _, t in preds]
        zs = [gt.positions[:, 2]] + [t.positions[:, 2] for _, t in preds]
        extent = max(
            max(float(x.max()) for x in xs) - min(float(x.min()) for x in xs),
            max(float(z.max()) for z in zs) - min(float(z.min()) for z in zs),
        )
        bar = scale_bar_length(extent)
        ax.add_artist(AnchoredSizeBar(ax.transData, bar, f"{bar:g} m", loc="lower right", frameon=False))

        ax.set_xlabel("x [m]")
        ax.set_ylabel("z [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="upper left")
    return fig


def save_svg(fig: Figure, out: str | Path) -> None:
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(out, format="svg", metadata=SVG_METADATA)


def plot_trajectories(
    gt: Trajectory,
    preds: Sequence[tuple[str, Trajectory]],
    out: str | Path,
    gt_label: str = "ground truth",
) -> None:
    save_svg(build_figure(gt, preds, gt_label), out)
