"""Cut-list bookkeeping: merging, validation, and shot segmentation."""

from __future__ import annotations

from pathlib import Path

from .errors import ValidationError


def validate_cuts(cuts, n_frames: int, what: str = "cut") -> list[int]:
    """Sort and range-check a cut list.

    A cut at frame c means the window jumps between frames c-1 and c, so
    the first and last frame can never carry one.
    """
    out = sorted(int(c) for c in cuts)
    for c in out:
        if not 2 <= c <= n_frames - 1:
            raise ValidationError(
                f"{what} at frame {c} outside the valid range [2, {n_frames - 1}]")
    return out


def merge_cuts(original, new, n_frames: int) -> list[int]:
    """Merge original and newly introduced cuts into one sorted, deduplicated list."""
    merged = set(validate_cuts(original, n_frames, "original cut"))
    merged.update(validate_cuts(new, n_frames, "new cut"))
    return sorted(merged)


def load_cuts_file(source, n_frames: int) -> list[int]:
    """Read original cuts from a text file, one 1-based frame per line.

    Blank lines and '#' comments are skipped; frames are range-checked.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    frames = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            frames.append(int(line))
        except ValueError as exc:
            raise ValidationError(f"cuts file line {i}: {line!r} is not "
                                  "a frame number") from exc
    return validate_cuts(frames, n_frames, "original cut")


def shot_segments(cuts, n_frames: int) -> list[tuple[int, int]]:
    """Split frames 1..N into shots delimited by cuts.

    Each cut frame starts a new segment; returns inclusive (start, end)
    1-based frame ranges covering the whole timeline.
    """
    bounds = validate_cuts(cuts, n_frames)
    starts = [1] + bounds
    ends = [c - 1 for c in bounds] + [n_frames]
    return list(zip(starts, ends))
