"""Fixation detection and per-frame gaze dispersion.

Fixations are found per user with a two-step spatial dispersion threshold:
a candidate cluster grows while each new sample stays within t1 of the
running centroid, then members farther than t2 from the final centroid are
rejected and the centroid recomputed.  Clusters shorter than the minimum
duration are discarded.

The per-frame standard deviation of fixated gaze across users feeds the
zoom model; using fixations instead of raw gaze makes it robust to
momentary tracker noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import GazeSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fixation:
    user_id: int
    start_frame: int
    end_frame: int
    centroid_x: float
    centroid_y: float

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass
class DispersionSeries:
    """Per-frame SD of fixation x-centroids across users.

    ``sigma`` is defined everywhere (undefined frames are filled from the
    nearest defined neighbor); ``defined_mask`` records which frames had at
    least two users with an active fixation before filling.
    """

    sigma: np.ndarray
    defined_mask: np.ndarray


def min_duration_frames(min_dur_ms: float, fps: float) -> int:
    return max(1, math.ceil(min_dur_ms * fps / 1000.0 - 1e-9))


def detect_fixations(gs: GazeSet, t1: float, t2: float,
                     min_dur_ms: float = 200.0) -> list[Fixation]:
    """Detect fixations for every user in the recording.

    t1 and t2 are the cluster-growing and member-rejection distances in
    pixels; min_dur_ms is the shortest fixation kept.  Emitted fixations
    are disjoint in time within each user.
    """
    if not t1 > t2 > 0:
        raise ValidationError("fixation thresholds need t1 > t2 > 0")
    if min_dur_ms <= 0:
        raise ValidationError("minimum duration must be positive")
    min_frames = min_duration_frames(min_dur_ms, gs.fps)

    out: list[Fixation] = []
    for user in np.unique(gs.user_ids):
        rows = gs.user_rows(user)
        rows = rows[gs.valid[rows]]
        if len(rows) == 0:
            continue
        fr = gs.frames[rows]
        px = gs.xs[rows]
        py = gs.ys[rows]
        start = 0
        cx, cy = px[0], py[0]
        count = 1
        for i in range(1, len(rows) + 1):
            inside = False
            if i < len(rows):
                inside = math.hypot(px[i] - cx, py[i] - cy) <= t1
            if inside:
                count += 1
                cx += (px[i] - cx) / count
                cy += (py[i] - cy) / count
                continue
            fix = _finish_cluster(int(user), fr[start:i], px[start:i], py[start:i],
                                  cx, cy, t2, min_frames)
            if fix is not None:
                out.append(fix)
            if i < len(rows):
                start = i
                cx, cy = px[i], py[i]
                count = 1
    return out


def _finish_cluster(user, frames, xs, ys, cx, cy, t2, min_frames):
    # step 2: reject members far from the final centroid, recompute
    dist = np.hypot(xs - cx, ys - cy)
    keep = dist <= t2
    if not np.any(keep):
        return None
    start, end = int(frames[keep][0]), int(frames[keep][-1])
    if end - start + 1 < min_frames:
        return None
    return Fixation(user, start, end,
                    float(xs[keep].mean()), float(ys[keep].mean()))


def dispersion_series(fixations: list[Fixation], gs: GazeSet) -> DispersionSeries:
    """Per-frame population SD of active-fixation x-centroids across users.

    Frames where fewer than two users hold an active fixation are undefined;
    they are filled forward from the last defined frame, then backward for
    any leading gap.  If no frame is defined at all, falls back to the SD of
    raw gaze x per frame, and finally to zero with a warning.
    """
    n = gs.n_frames
    cnt = np.zeros(n)
    acc = np.zeros(n)
    acc2 = np.zeros(n)
    for f in fixations:
        sl = slice(f.start_frame - 1, f.end_frame)
        cnt[sl] += 1
        acc[sl] += f.centroid_x
        acc2[sl] += f.centroid_x ** 2

    sigma, mask = _population_sd(cnt, acc, acc2)
    if not mask.any():
        sigma, raw_mask = _raw_fallback(gs)
        if raw_mask.any():
            logger.warning("no frame has two active fixations; "
                           "dispersion falls back to raw gaze")
            sigma = _fill(sigma, raw_mask)
        else:
            logger.warning("gaze dispersion undefined everywhere; using zero")
            sigma = np.zeros(n)
        return DispersionSeries(sigma, mask)

    return DispersionSeries(_fill(sigma, mask), mask)


def _population_sd(cnt, acc, acc2):
    mask = cnt >= 2
    sigma = np.zeros_like(acc)
    c = np.where(mask, cnt, 1)
    var = acc2 / c - (acc / c) ** 2
    sigma[mask] = np.sqrt(np.maximum(var[mask], 0.0))
    return sigma, mask


def _raw_fallback(gs: GazeSet):
    n = gs.n_frames
    cnt = np.zeros(n)
    acc = np.zeros(n)
    acc2 = np.zeros(n)
    rows = np.flatnonzero(gs.valid)
    idx = gs.frames[rows] - 1
    np.add.at(cnt, idx, 1)
    np.add.at(acc, idx, gs.xs[rows])
    np.add.at(acc2, idx, gs.xs[rows] ** 2)
    return _population_sd(cnt, acc, acc2)


def _fill(sigma: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Carry the last defined value forward, then the first one backward."""
    idx = np.where(mask, np.arange(len(sigma)), -1)
    idx = np.maximum.accumulate(idx)
    filled = sigma.copy()
    defined = idx >= 0
    filled[defined] = sigma[idx[defined]]
    if not defined.all():
        first = np.flatnonzero(mask)[0]
        filled[~defined] = sigma[first]
    return filled


def save_fixations_csv(fixations: list[Fixation], target) -> None:
    lines = ["user,start_frame,end_frame,cx,cy"]
    for f in sorted(fixations, key=lambda f: (f.user_id, f.start_frame)):
        lines.append(f"{f.user_id},{f.start_frame},{f.end_frame},"
                     f"{f.centroid_x:.3f},{f.centroid_y:.3f}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        from pathlib import Path
        Path(target).write_text(payload, encoding="utf-8")
