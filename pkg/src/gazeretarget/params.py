"""Run geometry and tunable parameters with their default derivations.

All defaults reproduce the reference configuration: the same parameter set
is intended to work unchanged for wide-angle stage recordings and edited
movie footage alike.  Every derived quantity (retarget width, jump-cut
width, data deadzone, pan-speed cap) can be overridden explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ValidationError


def parse_aspect(aspect: str | float) -> float:
    """Parse a target aspect ratio given as ``"4:3"``, ``"1:1"`` or a float."""
    if isinstance(aspect, (int, float)):
        value = float(aspect)
    else:
        text = aspect.strip()
        if ":" in text:
            num, _, den = text.partition(":")
            try:
                value = float(num) / float(den)
            except (ValueError, ZeroDivisionError) as exc:
                raise ValidationError(f"bad aspect ratio {aspect!r}") from exc
        else:
            try:
                value = float(text)
            except ValueError as exc:
                raise ValidationError(f"bad aspect ratio {aspect!r}") from exc
    if value <= 0:
        raise ValidationError(f"aspect ratio must be positive, got {aspect!r}")
    return value


@dataclass(frozen=True)
class Geometry:
    """Original-frame dimensions and timing of the source video."""

    frame_width: int          # W_o, pixels
    frame_height: int         # H_o, pixels
    fps: float                # frames per second
    n_frames: int             # N

    def __post_init__(self):
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ValidationError("frame dimensions must be positive")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if self.n_frames < 1:
            raise ValidationError("need at least one frame")

    def retarget_width(self, aspect: str | float) -> float:
        """Width of the full-height cropping window for a target aspect."""
        w_r = self.frame_height * parse_aspect(aspect)
        if w_r > self.frame_width:
            raise ValidationError(
                f"target width {w_r:.0f} exceeds source width "
                f"{self.frame_width}; aspect {aspect!r} is not reachable by cropping")
        return w_r


@dataclass(frozen=True)
class Params:
    """All tunables of the retargeting algorithm.

    ``None`` fields are derived from geometry and target width when
    :meth:`resolve` is called:

    * ``jump_width``  defaults to 0.75 of the retarget width,
    * ``tau``         defaults to 0.1 of the retarget width,
    * ``pan_speed_max`` defaults to W_o / (5 s * fps), i.e. a pan takes an
      on-screen object at least five seconds to traverse the frame,
    * fixation thresholds default to 4% / 2% of the frame width.
    """

    lam: float = 2.0                  # transition weight in the path search
    sigma_px: float = 15.0            # gaze density Gaussian SD, pixels
    cut_rhythm: float = 200.0         # D, frames; controls pacing of new cuts
    jump_width: float | None = None   # W, pixels; min jump to avoid a jump cut
    lambda1: float = 5000.0           # first-difference L1 weight
    lambda2: float = 500.0            # second-difference L1 weight
    lambda3: float = 3000.0           # third-difference L1 weight
    tau: float | None = None          # data-term deadzone, pixels
    pan_speed_max: float | None = None  # pixels/frame
    cut_padding: int = 5              # p, frames relaxed on each side of a cut
    delay: int = 10                   # reference delay per shot, frames
    z_min: float = 0.7                # smallest zoom factor
    state_stride: int = 4             # path-search state subsampling
    fix_t1: float | None = None       # fixation cluster grow threshold, pixels
    fix_t2: float | None = None       # fixation member rejection threshold, pixels
    fix_min_dur_ms: float = 200.0     # minimum fixation duration

    def resolve(self, geom: Geometry, w_r: float) -> "Params":
        """Fill in derived defaults for a concrete geometry and target width."""
        updates = {}
        if self.jump_width is None:
            updates["jump_width"] = 0.75 * w_r
        if self.tau is None:
            updates["tau"] = 0.1 * w_r
        if self.pan_speed_max is None:
            updates["pan_speed_max"] = geom.frame_width / (5.0 * geom.fps)
        if self.fix_t1 is None:
            updates["fix_t1"] = 0.04 * geom.frame_width
        if self.fix_t2 is None:
            updates["fix_t2"] = 0.02 * geom.frame_width
        resolved = replace(self, **updates) if updates else self
        resolved.validate(geom)
        return resolved

    def validate(self, geom: Geometry | None = None):
        if self.lam <= 0:
            raise ValidationError("transition weight must be positive")
        if self.sigma_px <= 0:
            raise ValidationError("gaze density sigma must be positive")
        if self.cut_rhythm <= 0:
            raise ValidationError("cut rhythm constant must be positive")
        if self.state_stride < 1:
            raise ValidationError("state stride must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValidationError("difference penalty weights must be >= 0")
        if self.cut_padding < 0:
            raise ValidationError("cut padding must be >= 0")
        if self.delay < 0:
            raise ValidationError("delay must be >= 0")
        if not 0 < self.z_min <= 1:
            raise ValidationError("z_min must lie in (0, 1]")
        if self.tau is not None and self.tau < 0:
            raise ValidationError("deadzone must be >= 0")
        if self.pan_speed_max is not None and self.pan_speed_max <= 0:
            raise ValidationError("pan speed cap must be positive")
        if self.jump_width is not None:
            if self.jump_width <= 0:
                raise ValidationError("jump-cut width must be positive")
            if geom is not None and self.jump_width >= geom.frame_width:
                raise ValidationError("jump-cut width must be below the frame width")
        if self.fix_t1 is not None and self.fix_t2 is not None:
            if not self.fix_t1 > self.fix_t2 > 0:
                raise ValidationError("fixation thresholds need t1 > t2 > 0")
        if self.fix_min_dur_ms <= 0:
            raise ValidationError("fixation duration must be positive")
