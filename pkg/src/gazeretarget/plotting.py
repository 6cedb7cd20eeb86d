"""Static SVG summary plot: gaze, rough path, final path, zoom, cuts.

Output is byte-stable for identical inputs (fixed hash salt, no embedded
timestamps), so plots can be diffed like any other artifact.
"""

from __future__ import annotations

import numpy as np

from .ingest import GazeSet
from .trajectory import Trajectory


def plot_run(gs: GazeSet, rough_r, traj: Trajectory, target,
             title: str | None = None) -> None:
    """Write an SVG with the x-paths over time and the zoom track below."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = gs.n_frames
    frames = np.arange(1, n + 1)
    with plt.rc_context({"svg.hashsalt": "gazeretarget"}):
        fig, (ax, axz) = plt.subplots(
            2, 1, figsize=(10.0, 6.0), sharex=True,
            gridspec_kw={"height_ratios": [3, 1]})
        rows = np.flatnonzero(gs.valid)
        ax.scatter(gs.frames[rows], gs.xs[rows], s=3, c="#9aa0a6",
                   alpha=0.35, linewidths=0, label="gaze", rasterized=False)
        if rough_r is not None:
            ax.plot(frames, rough_r, color="#e8710a", lw=1.0,
                    label="window path")
        ax.plot(frames, traj.x_star, color="#1a73e8", lw=1.6,
                label="optimized center")
        for c in traj.cuts_all:
            ax.axvline(c, color="#d93025", lw=0.8, ls="--")
            axz.axvline(c, color="#d93025", lw=0.8, ls="--")
        ax.set_ylabel("x (px)")
        ax.set_ylim(0, gs.frame_width)
        ax.legend(loc="upper right", fontsize=8)
        if title:
            ax.set_title(title)

        axz.plot(frames, traj.z, color="#188038", lw=1.2)
        axz.set_ylabel("zoom")
        axz.set_ylim(0.65, 1.05)
        axz.set_xlabel("frame")
        fig.tight_layout()
        if hasattr(target, "write"):
            fig.savefig(target, format="svg", metadata={"Date": None})
        else:
            fig.savefig(str(target), format="svg", metadata={"Date": None})
        plt.close(fig)
