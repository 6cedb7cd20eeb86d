"""Fallback shot-boundary detector from per-frame luma histograms.

A convenience for inputs without a supplied cut list: a cut is declared
wherever the normalized histogram intersection between consecutive frames
drops below a threshold.  Gradual dissolves that never cross the
threshold are missed by design; supply an explicit cut file for those.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def detect_cuts_naive(histograms, threshold: float = 0.5) -> list[int]:
    """Return 1-based frames whose transition from the previous frame cuts.

    Adjacent detections collapse to the first frame of the run.
    """
    hists = [np.asarray(h, dtype=float) for h in histograms]
    if len(hists) == 0:
        return []
    bins = hists[0].shape
    for i, h in enumerate(hists):
        if h.shape != bins or h.ndim != 1:
            raise ValidationError(
                f"histogram {i + 1} has {h.shape} bins, expected {bins}")
    m = np.vstack(hists)
    sums = m.sum(axis=1, keepdims=True)
    norm = np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)
    inter = np.minimum(norm[1:], norm[:-1]).sum(axis=1)

    cuts = []
    prev = False
    for i, below in enumerate(inter < threshold):
        if below and not prev:
            cuts.append(i + 2)
        prev = below
    return cuts
