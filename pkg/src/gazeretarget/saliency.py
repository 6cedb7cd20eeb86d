"""Gaze-driven saliency matrix.

Every valid gaze sample stamps a negative unit impulse at its rounded
x-position in its frame's column; each column is then smoothed with a
truncated, unit-sum Gaussian.  Mass falling outside the frame is dropped.
Low values mark attended positions, so the path stage minimizes the matrix
value under the window center.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import ValidationError
from .ingest import GazeSet


@dataclass(frozen=True, eq=False)
class SaliencyMatrix:
    """Per-position unary cost, frame_width x n_frames, column-major."""

    values: np.ndarray
    sigma_px: float

    @property
    def frame_width(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def build_saliency(gs: GazeSet, sigma_px: float = 15.0) -> SaliencyMatrix:
    """Build the saliency matrix from all valid samples of a recording.

    The array is Fortran-ordered so per-frame columns are contiguous for
    the path stage's column sweeps.
    """
    if not sigma_px > 0:
        raise ValidationError("saliency sigma must be positive")
    w = gs.frame_width
    m = np.zeros((w, gs.n_frames), order="F")
    rows = np.flatnonzero(gs.valid)
    px = np.clip(np.rint(gs.xs[rows]).astype(np.int64), 0, w - 1)
    np.add.at(m, (px, gs.frames[rows] - 1), -1.0)
    gaussian_filter1d(m, sigma_px, axis=0, output=m,
                      mode="constant", cval=0.0, truncate=4.0)
    m.flags.writeable = False
    return SaliencyMatrix(m, float(sigma_px))


def unary_cost(sm: SaliencyMatrix, r: int, t: int) -> float:
    """Cost of placing the window center at x=r in frame t (1-based t)."""
    if not 0 <= r < sm.frame_width:
        raise IndexError(f"x position {r} outside [0, {sm.frame_width})")
    if not 1 <= t <= sm.n_frames:
        raise IndexError(f"frame {t} outside [1, {sm.n_frames}]")
    return float(sm.values[r, t - 1])


def save_pgm(sm: SaliencyMatrix, target) -> None:
    """Dump the matrix as a binary PGM heat map (salient = bright).

    Rows are x-positions, columns are frames, like a path-over-time plot.
    """
    vmin = sm.values.min()
    if vmin < 0:
        gray = np.rint(255.0 * sm.values / vmin).astype(np.uint8)
    else:
        gray = np.zeros(sm.values.shape, dtype=np.uint8)
    header = f"P5\n{sm.n_frames} {sm.frame_width}\n255\n".encode("ascii")
    payload = header + np.ascontiguousarray(gray).tobytes()
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_bytes(payload)
