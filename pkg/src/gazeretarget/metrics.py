"""Evaluation: how much of the recorded gaze the crop windows keep.

A sample is included when its x lies inside the frame's crop rectangle;
y is ignored because the camera never moves vertically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ValidationError
from .ingest import GazeSet
from .params import Geometry
from .trajectory import Trajectory, crop_rects


@dataclass(frozen=True, eq=False)
class GazeInclusionReport:
    included_pct: float
    per_frame_included: np.ndarray
    n_samples: int

    def to_dict(self) -> dict:
        return {"included_pct": self.included_pct,
                "n_samples": self.n_samples}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def included_gaze(gs: GazeSet, traj: Trajectory) -> GazeInclusionReport:
    """Fraction of valid samples falling inside the per-frame crop window."""
    n = gs.n_frames
    if len(traj.x_star) != n:
        raise ValidationError("trajectory length must match the frame count")
    rows = np.flatnonzero(gs.valid)
    if len(rows) == 0:
        raise EmptyInputError("no valid gaze samples to score")
    t = gs.frames[rows] - 1
    x = gs.xs[rows]
    left = traj.crop_rects[t, 0]
    width = traj.crop_rects[t, 2]
    inside = (left <= x) & (x < left + width)

    per_frame = np.full(n, np.nan)
    cnt = np.zeros(n)
    hit = np.zeros(n)
    np.add.at(cnt, t, 1)
    np.add.at(hit, t, inside.astype(float))
    has = cnt > 0
    per_frame[has] = hit[has] / cnt[has]

    pct = 100.0 * float(inside.sum()) / len(rows)
    return GazeInclusionReport(pct, per_frame, len(rows))


def centered_baseline(geom: Geometry, w_r: float) -> Trajectory:
    """Fixed full-height window at the frame center: the no-edit reference."""
    x = np.full(geom.n_frames, geom.frame_width / 2.0)
    z = np.ones(geom.n_frames)
    return Trajectory(x, z, crop_rects(x, z, geom, w_r), [])
