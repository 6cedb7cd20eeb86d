"""Per-frame zoom targets from gaze dispersion.

Within each shot segment the dispersion is normalized by the segment's
maximum; frames where all users agree (low dispersion) zoom in, up to a
factor of 0.7, and frames at the segment's peak dispersion stay at full
width.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cuts import shot_segments
from .errors import ValidationError
from .fixation import DispersionSeries


@dataclass(frozen=True, eq=False)
class ZoomTargets:
    """Target zoom per frame and the per-frame normalizer that produced it."""

    rho: np.ndarray
    sigma_max: np.ndarray


def compute_zoom_targets(ds: DispersionSeries,
                         shot_bounds: list[int]) -> ZoomTargets:
    """Map dispersion to target zoom within each shot segment.

    Single-frame segments inherit the previous segment's last target
    (1.0 when there is none); a segment with zero dispersion everywhere
    stays at full width.
    """
    sigma = np.asarray(ds.sigma, dtype=float)
    n = len(sigma)
    if n == 0:
        raise ValidationError("dispersion series is empty")
    rho = np.empty(n)
    smax = np.zeros(n)
    for a, b in shot_segments(shot_bounds, n):
        seg = slice(a - 1, b)
        if a == b:
            rho[seg] = rho[a - 2] if a > 1 else 1.0
            smax[seg] = smax[a - 2] if a > 1 else 0.0
            continue
        m = float(sigma[seg].max())
        smax[seg] = m
        if m <= 0.0:
            rho[seg] = 1.0
        else:
            rho[seg] = 1.0 - 0.3 * (1.0 - sigma[seg] / m)
    return ZoomTargets(np.clip(rho, 0.7, 1.0), smax)


def save_zoom_csv(ds: DispersionSeries, zt: ZoomTargets, target) -> None:
    lines = ["frame,sigma,rho"]
    for t in range(len(zt.rho)):
        lines.append(f"{t + 1},{ds.sigma[t]:.4f},{zt.rho[t]:.6f}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_text(payload, encoding="utf-8")
