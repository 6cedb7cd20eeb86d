"""Synthetic gaze generators for the three canonical viewing regimes.

fixation: gaze dwells around one anchor; the edited camera should hold still.
pursuit:  gaze drifts linearly, as when tracking a moving actor; expect a pan.
saccade:  gaze jumps instantaneously between two anchors; expect a cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import GazeSet
from .params import Geometry

REGIMES = ("fixation", "pursuit", "saccade")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic multi-user gaze recording."""

    regime: str
    geometry: Geometry
    n_users: int = 5
    noise_sd: float = 15.0        # matches the default gaze-density sigma
    anchor_x: float | None = None  # defaults to frame center
    anchor_y: float | None = None
    velocity: float = 0.0         # pursuit drift, pixels/frame
    jump_frame: int = 0           # saccade: first frame at the new anchor
    jump_to: float | None = None  # saccade: second anchor x

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValidationError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.n_users < 1:
            raise ValidationError("need at least one user")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        g = self.geometry
        ax, ay = self.anchors()
        if not (0 <= ax < g.frame_width and 0 <= ay < g.frame_height):
            raise ValidationError("anchor outside the frame")
        if self.regime == "pursuit":
            end = ax + self.velocity * (g.n_frames - 1)
            if not 0 <= end < g.frame_width:
                raise ValidationError("pursuit drift leaves the frame")
        if self.regime == "saccade":
            if not 2 <= self.jump_frame <= g.n_frames:
                raise ValidationError("jump_frame outside [2, N]")
            if self.jump_to is None or not 0 <= self.jump_to < g.frame_width:
                raise ValidationError("saccade target outside the frame")

    def anchors(self) -> tuple[float, float]:
        g = self.geometry
        ax = g.frame_width / 2.0 if self.anchor_x is None else float(self.anchor_x)
        ay = g.frame_height / 2.0 if self.anchor_y is None else float(self.anchor_y)
        return ax, ay


def generate(spec: SynthSpec, seed: int = 0) -> GazeSet:
    """Generate a deterministic GazeSet for the given spec and seed."""
    g = spec.geometry
    n, u = g.n_frames, spec.n_users
    ax, ay = spec.anchors()
    t = np.arange(1, n + 1, dtype=np.float64)

    if spec.regime == "fixation":
        base = np.full(n, ax)
    elif spec.regime == "pursuit":
        base = ax + spec.velocity * (t - 1)
    else:
        base = np.where(t >= spec.jump_frame, float(spec.jump_to), ax)

    rng = np.random.default_rng(seed)
    xs = base[None, :] + rng.normal(0.0, spec.noise_sd, size=(u, n))
    ys = ay + rng.normal(0.0, spec.noise_sd, size=(u, n))
    # noise may push a sample over the edge; keep everything valid
    np.clip(xs, 0.0, g.frame_width - 1e-6, out=xs)
    np.clip(ys, 0.0, g.frame_height - 1e-6, out=ys)

    users = np.repeat(np.arange(1, u + 1), n)
    frames = np.tile(np.arange(1, n + 1), u)
    return GazeSet(users, frames, xs.ravel(), ys.ravel(),
                   np.ones(u * n, dtype=bool), g)
