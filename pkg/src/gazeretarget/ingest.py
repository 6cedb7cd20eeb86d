"""Load, validate and normalize multi-user gaze recordings.

Input is a CSV stream with header ``user,frame,x,y`` (or ``user,time_s,x,y``;
timestamps are converted with frame = floor(time * fps) + 1), or a JSON array
of objects with the same fields.  Coordinates are pixels in the original
frame; anything the exporter recorded on a letterboxed display must already
be mapped back to frame coordinates.

Policy: out-of-bounds or missing coordinates mark the sample invalid rather
than clamping it (clamping would fabricate gaze mass at the frame edges);
records with frame indices outside [1, N] and duplicate (user, frame)
records are dropped and counted.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, GazeParseError, ValidationError
from .params import Geometry

logger = logging.getLogger(__name__)

_FRAME_HEADERS = ("user", "frame", "x", "y")
_TIME_HEADERS = ("user", "time_s", "x", "y")


@dataclass(frozen=True)
class GazeSample:
    """One gaze reading of one user at one frame."""

    user_id: int
    frame: int        # 1-based frame index
    x: float          # pixels in [0, frame_width) when valid
    y: float          # pixels in [0, frame_height) when valid
    valid: bool


@dataclass
class IngestSummary:
    """Counts of records altered or dropped while loading."""

    n_records: int = 0
    n_rejected: int = 0      # frame index outside [1, N]; record dropped
    n_duplicates: int = 0    # repeated (user, frame); record dropped
    n_invalidated: int = 0   # stored, but coordinates out of bounds or missing

    @property
    def n_dropped(self) -> int:
        return self.n_rejected + self.n_duplicates


class GazeSet:
    """Immutable frame-indexed gaze recording over multiple users.

    Samples are stored columnar (user, frame, x, y, valid arrays) sorted by
    (user, frame), with at most one sample per (user, frame) pair.  Safe to
    share across threads.
    """

    def __init__(self, user_ids, frames, xs, ys, valid, geometry: Geometry):
        lengths = {len(a) for a in (user_ids, frames, xs, ys, valid)}
        if len(lengths) != 1:
            raise ValidationError("gaze sample columns have mismatched lengths")
        order = np.lexsort((np.asarray(frames), np.asarray(user_ids)))
        self.user_ids = np.asarray(user_ids, dtype=np.int64)[order]
        self.frames = np.asarray(frames, dtype=np.int64)[order]
        self.xs = np.asarray(xs, dtype=np.float64)[order]
        self.ys = np.asarray(ys, dtype=np.float64)[order]
        self.valid = np.asarray(valid, dtype=bool)[order]
        self.geometry = geometry
        self._check()
        for arr in (self.user_ids, self.frames, self.xs, self.ys, self.valid):
            arr.setflags(write=False)

    def _check(self):
        n = len(self.user_ids)
        if not all(len(a) == n for a in (self.frames, self.xs, self.ys, self.valid)):
            raise ValidationError("gaze sample columns have mismatched lengths")
        if n == 0:
            raise EmptyInputError("gaze set holds no samples")
        if np.any(self.frames < 1) or np.any(self.frames > self.geometry.n_frames):
            raise ValidationError("gaze sample frame index outside [1, N]")
        keys = self.user_ids * (self.geometry.n_frames + 1) + self.frames
        if len(np.unique(keys)) != n:
            raise ValidationError("duplicate (user, frame) gaze samples")
        v = self.valid
        # NaN slips through open-interval checks, so demand the positive form
        if not np.all((self.xs[v] >= 0) & (self.xs[v] < self.geometry.frame_width)):
            raise ValidationError("valid sample with x outside [0, frame_width)")
        if not np.all((self.ys[v] >= 0) & (self.ys[v] < self.geometry.frame_height)):
            raise ValidationError("valid sample with y outside [0, frame_height)")
        if not np.any(v):
            raise EmptyInputError("gaze set holds no valid samples")

    @property
    def n_users(self) -> int:
        return len(np.unique(self.user_ids))

    @property
    def n_frames(self) -> int:
        return self.geometry.n_frames

    @property
    def frame_width(self) -> int:
        return self.geometry.frame_width

    @property
    def frame_height(self) -> int:
        return self.geometry.frame_height

    @property
    def fps(self) -> float:
        return self.geometry.fps

    @property
    def samples(self) -> tuple[GazeSample, ...]:
        return tuple(
            GazeSample(int(u), int(f), float(x), float(y), bool(v))
            for u, f, x, y, v in zip(self.user_ids, self.frames,
                                     self.xs, self.ys, self.valid))

    def __len__(self) -> int:
        return len(self.user_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GazeSet):
            return NotImplemented
        return (self.geometry == other.geometry
                and np.array_equal(self.user_ids, other.user_ids)
                and np.array_equal(self.frames, other.frames)
                and np.array_equal(self.xs, other.xs, equal_nan=True)
                and np.array_equal(self.ys, other.ys, equal_nan=True)
                and np.array_equal(self.valid, other.valid))

    def user_rows(self, user_id: int) -> np.ndarray:
        """Indices of this user's samples, in frame order."""
        return np.flatnonzero(self.user_ids == user_id)


def gaze_column(gs: GazeSet, t: int) -> np.ndarray:
    """x-positions of the valid samples at frame t (1-based), ordered by user."""
    if not 1 <= t <= gs.n_frames:
        raise IndexError(f"frame {t} outside [1, {gs.n_frames}]")
    mask = (gs.frames == t) & gs.valid
    return gs.xs[mask]


def _coerce_float(text: str, line: int) -> float:
    text = text.strip()
    if not text or text.lower() in ("nan", "na"):
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise GazeParseError(f"not a number: {text!r}", line) from None


def _records_from_csv(lines, geom: Geometry):
    header = None
    time_based = False
    for lineno, raw in enumerate(lines, start=1):
        row = raw.strip()
        if not row or row.startswith("#"):
            continue
        fields = [f.strip() for f in row.split(",")]
        if header is None:
            header = tuple(f.lower() for f in fields)
            if header == _FRAME_HEADERS:
                time_based = False
            elif header == _TIME_HEADERS:
                time_based = True
            else:
                raise GazeParseError(
                    f"unrecognized header {row!r}; expected "
                    f"{','.join(_FRAME_HEADERS)} or {','.join(_TIME_HEADERS)}", lineno)
            continue
        if len(fields) != 4:
            raise GazeParseError(f"expected 4 fields, got {len(fields)}", lineno)
        try:
            user = int(fields[0])
        except ValueError:
            raise GazeParseError(f"bad user id {fields[0]!r}", lineno) from None
        if time_based:
            time_s = _coerce_float(fields[1], lineno)
            if math.isnan(time_s):
                raise GazeParseError("missing timestamp", lineno)
            frame = math.floor(time_s * geom.fps) + 1
        else:
            try:
                frame = int(fields[1])
            except ValueError:
                raise GazeParseError(f"bad frame index {fields[1]!r}", lineno) from None
        yield user, frame, _coerce_float(fields[2], lineno), _coerce_float(fields[3], lineno)
    if header is None:
        raise GazeParseError("empty gaze stream", None)


def _records_from_json(text: str, geom: Geometry):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GazeParseError(f"bad JSON gaze input: {exc}") from None
    if isinstance(payload, dict):
        payload = payload.get("samples", None)
    if not isinstance(payload, list):
        raise GazeParseError("JSON gaze input must be a list of records "
                             "or an object with a 'samples' list")
    for i, rec in enumerate(payload):
        if not isinstance(rec, dict) or "user" not in rec:
            raise GazeParseError(f"record {i}: expected an object with a 'user' field")
        user = int(rec["user"])
        if "frame" in rec:
            frame = int(rec["frame"])
        elif "time_s" in rec:
            frame = math.floor(float(rec["time_s"]) * geom.fps) + 1
        else:
            raise GazeParseError(f"record {i}: needs 'frame' or 'time_s'")
        x = rec.get("x", None)
        y = rec.get("y", None)
        yield (user, frame,
               math.nan if x is None else float(x),
               math.nan if y is None else float(y))


def parse_gaze(source, geometry: Geometry) -> tuple[GazeSet, IngestSummary]:
    """Parse a gaze stream and report what was dropped or invalidated.

    ``source`` may be a path, a text/byte stream, or a string/bytes payload.
    """
    text = _slurp(source)
    stripped = text.lstrip()
    if stripped[:1] in ("[", "{"):
        records = _records_from_json(text, geometry)
    else:
        records = _records_from_csv(io.StringIO(text), geometry)

    summary = IngestSummary()
    seen: set[tuple[int, int]] = set()
    users, frames, xs, ys, valid = [], [], [], [], []
    for user, frame, x, y in records:
        summary.n_records += 1
        if not 1 <= frame <= geometry.n_frames:
            summary.n_rejected += 1
            continue
        if (user, frame) in seen:
            summary.n_duplicates += 1
            continue
        seen.add((user, frame))
        ok = (not math.isnan(x) and not math.isnan(y)
              and 0 <= x < geometry.frame_width
              and 0 <= y < geometry.frame_height)
        if not ok:
            summary.n_invalidated += 1
        users.append(user)
        frames.append(frame)
        xs.append(x)
        ys.append(y)
        valid.append(ok)

    if not any(valid):
        raise EmptyInputError("no valid gaze samples after ingest")
    gs = GazeSet(users, frames, xs, ys, valid, geometry)
    if summary.n_dropped or summary.n_invalidated:
        logger.warning(
            "gaze ingest: %d records, %d rejected (bad frame), %d duplicates "
            "dropped, %d invalidated (out of bounds / missing coords)",
            summary.n_records, summary.n_rejected,
            summary.n_duplicates, summary.n_invalidated)
    return gs, summary


def load_gaze(source, geometry: Geometry) -> GazeSet:
    """Load gaze recordings into a frame-indexed GazeSet (see :func:`parse_gaze`)."""
    gs, _ = parse_gaze(source, geometry)
    return gs


def save_gaze(gs: GazeSet, target) -> None:
    """Write a GazeSet as the standard ``user,frame,x,y`` CSV.

    Floats are written with shortest round-trip repr, so loading the file
    back yields an identical GazeSet; missing coordinates become empty fields.
    """
    lines = ["user,frame,x,y"]
    for u, f, x, y in zip(gs.user_ids, gs.frames, gs.xs, gs.ys):
        xs = "" if math.isnan(x) else repr(float(x))
        ys = "" if math.isnan(y) else repr(float(y))
        lines.append(f"{u},{f},{xs},{ys}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_text(payload, encoding="utf-8")


def _slurp(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        # Inline payloads are multi-line (CSV) or JSON; anything else is a path.
        if "\n" in source or source.lstrip()[:1] in ("[", "{"):
            return source
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data
