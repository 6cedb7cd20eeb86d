"""Stage one: dynamic programming over window positions.

Finds the rough per-frame window-center path r_t and the set of new cuts
by minimizing the sum of the saliency cost under the window center and a
weighted transition cost.  A transition moving at most W pixels is a pan
and costs 1 - exp(-4|dx|/W); a larger move is a cut and costs
1 + exp(-d/D), where d counts frames since the most recent cut.

d is path-dependent, so the default forward pass stores the d of the best
path into each node (an approximation that keeps the sweep O(K^2) per
frame).  An exact mode augments the state with d for small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .saliency import SaliencyMatrix


@dataclass(frozen=True)
class DpParams:
    """Transition weight, jump-cut width W (px), cut rhythm D (frames)."""

    lam: float
    jump_width: float
    cut_rhythm: float
    state_stride: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("transition weight must be positive")
        if not self.jump_width > 0:
            raise ValidationError("jump width must be positive")
        if not self.cut_rhythm > 0:
            raise ValidationError("cut rhythm must be positive")
        if self.state_stride < 1:
            raise ValidationError("state stride must be >= 1")


@dataclass(frozen=True, eq=False)
class PathEstimate:
    """Window-center x per frame, new-cut frames, and the path's cost."""

    r: np.ndarray
    cuts: list[int]
    total_cost: float


def transition_cost(r_prev: float, r_cur: float, d: float, p: DpParams) -> float:
    """Pan/cut transition cost between consecutive window centers."""
    if d < 1:
        raise ValidationError("frames since last cut must be >= 1")
    delta = abs(r_cur - r_prev)
    if delta <= p.jump_width:
        return 1.0 - math.exp(-4.0 * delta / p.jump_width)
    return 1.0 + math.exp(-d / p.cut_rhythm)


def _state_grid(w_o: int, stride: int) -> np.ndarray:
    # every x position is a candidate center; stage two pulls the crop
    # inside the frame, so the sweep is not restricted here
    g = np.arange(0, w_o, stride)
    if g[-1] != w_o - 1:
        g = np.append(g, w_o - 1)
    return g


def _pan_matrix(grid: np.ndarray, p: DpParams) -> np.ndarray:
    delta = np.abs(grid[:, None] - grid[None, :]).astype(float)
    pan = p.lam * (1.0 - np.exp(-4.0 * delta / p.jump_width))
    pan[delta > p.jump_width] = np.inf
    return pan


def _prefix_argmin(v: np.ndarray):
    run = np.minimum.accumulate(v)
    new = np.empty(len(v), dtype=bool)
    new[0] = True
    new[1:] = v[1:] < run[:-1]
    arg = np.maximum.accumulate(np.where(new, np.arange(len(v)), 0))
    return run, arg


def _suffix_argmin(v: np.ndarray):
    # ties resolve to the lowest index
    r = v[::-1]
    run = np.minimum.accumulate(r)
    new = np.empty(len(v), dtype=bool)
    new[0] = True
    new[1:] = r[1:] <= run[:-1]
    arg = np.maximum.accumulate(np.where(new, np.arange(len(v)), 0))
    return run[::-1], (len(v) - 1) - arg[::-1]


def optimize_path(sm: SaliencyMatrix, p: DpParams,
                  exact_d: bool = False) -> PathEstimate:
    """Minimize saliency-plus-transition cost over all window paths.

    With exact_d the state is augmented with the frames-since-cut counter,
    which is exact whenever n_frames <= 4D.
    """
    w_o = sm.frame_width
    if not p.jump_width < w_o:
        raise ValidationError("jump width must be below the frame width")
    grid = _state_grid(w_o, p.state_stride)
    unary = np.asfortranarray(sm.values[grid, :])
    if exact_d:
        return _optimize_exact(grid, unary, p)
    return _optimize_approx(grid, unary, p)


def _optimize_approx(grid, unary, p: DpParams):
    k, n = unary.shape
    pan = _pan_matrix(grid, p)
    lo_cnt = np.searchsorted(grid, grid - p.jump_width, side="left")
    hi_start = np.searchsorted(grid, grid + p.jump_width, side="right")

    pred = np.zeros((n, k), dtype=np.int32)
    was_cut = np.zeros((n, k), dtype=bool)
    cost = unary[:, 0].copy()
    d = np.full(k, p.cut_rhythm)

    scores = np.empty((k, k))
    for t in range(1, n):
        np.add(cost[:, None], pan, out=scores)
        pan_pred = np.argmin(scores, axis=0)
        pan_best = scores[pan_pred, np.arange(k)]

        cut_from = cost + p.lam * (1.0 + np.exp(-d / p.cut_rhythm))
        pre_min, pre_arg = _prefix_argmin(cut_from)
        suf_min, suf_arg = _suffix_argmin(cut_from)
        cut_best = np.full(k, np.inf)
        cut_pred = np.zeros(k, dtype=np.int64)
        has_pre = lo_cnt > 0
        cut_best[has_pre] = pre_min[lo_cnt[has_pre] - 1]
        cut_pred[has_pre] = pre_arg[lo_cnt[has_pre] - 1]
        has_suf = hi_start < k
        sv = np.where(has_suf, suf_min[np.minimum(hi_start, k - 1)], np.inf)
        sa = suf_arg[np.minimum(hi_start, k - 1)]
        better = sv < cut_best
        cut_best[better] = sv[better]
        cut_pred[better] = sa[better]

        take_cut = cut_best < pan_best
        tie = cut_best == pan_best
        take_cut[tie] = cut_pred[tie] < pan_pred[tie]
        best = np.where(take_cut, cut_best, pan_best)
        chosen = np.where(take_cut, cut_pred, pan_pred)

        pred[t] = chosen
        was_cut[t] = take_cut
        cost = unary[:, t] + best
        d = np.where(take_cut, 1.0, d[chosen] + 1.0)

    return _backtrack(grid, cost, pred, was_cut, n)


def _backtrack(grid, final_cost, pred, was_cut, n):
    j = int(np.argmin(final_cost))
    total = float(final_cost[j])
    r = np.empty(n)
    cuts = []
    for t in range(n - 1, -1, -1):
        r[t] = grid[j]
        if t > 0:
            if was_cut[t, j]:
                cuts.append(t + 1)
            j = int(pred[t, j])
    cuts.reverse()
    return PathEstimate(r, cuts, total)


def _optimize_exact(grid, unary, p: DpParams):
    # state (x, j): j = 0 means no cut yet (d = D + t - 1),
    # j >= 1 means the last cut happened j frames ago (d = j)
    k, n = unary.shape
    j_cap = max(1, int(math.ceil(min(4.0 * p.cut_rhythm, n))))
    pan = _pan_matrix(grid, p)
    in_reach = np.abs(grid[:, None] - grid[None, :]) <= p.jump_width

    big = np.inf
    cost = np.full((j_cap + 1, k), big)
    cost[0] = unary[:, 0]
    pred_k = np.zeros((n, j_cap + 1, k), dtype=np.int32)
    pred_j = np.zeros((n, j_cap + 1, k), dtype=np.int32)

    for t in range(1, n):
        new = np.full((j_cap + 1, k), big)
        npk = np.zeros((j_cap + 1, k), dtype=np.int32)
        npj = np.zeros((j_cap + 1, k), dtype=np.int32)

        for j in range(j_cap + 1):
            if not np.isfinite(cost[j]).any():
                continue
            scores = cost[j][:, None] + pan
            arg = np.argmin(scores, axis=0)
            val = scores[arg, np.arange(k)]
            jn = 0 if j == 0 else min(j + 1, j_cap)
            upd = val < new[jn]
            new[jn, upd] = val[upd]
            npk[jn, upd] = arg[upd]
            npj[jn, upd] = j

        d_of_j = np.array([p.cut_rhythm + t - 1.0]
                          + [float(j) for j in range(1, j_cap + 1)])
        cut_cost = cost + p.lam * (1.0 + np.exp(-d_of_j / p.cut_rhythm))[:, None]
        flat = cut_cost.reshape(-1)
        order = np.argsort(flat, kind="stable")
        for dest in range(k):
            ok = ~in_reach[:, dest]
            if not ok.any():
                continue
            allowed = np.tile(ok, j_cap + 1)
            for ix in order:
                if allowed[ix] and np.isfinite(flat[ix]):
                    if flat[ix] < new[1, dest]:
                        new[1, dest] = flat[ix]
                        npj[1, dest] = ix // k
                        npk[1, dest] = ix % k
                    break

        new += unary[:, t]
        cost = new
        pred_k[t] = npk
        pred_j[t] = npj

    flat = cost.reshape(-1)
    best = int(np.argmin(flat))
    j, x = best // k, best % k
    total = float(flat[best])
    r = np.empty(n)
    cuts = []
    for t in range(n - 1, -1, -1):
        r[t] = grid[x]
        if t > 0:
            if j == 1:
                cuts.append(t + 1)
            j, x = int(pred_j[t, j, x]), int(pred_k[t, j, x])
    cuts.reverse()
    return PathEstimate(r, cuts, total)


def path_cost(r: np.ndarray, sm: SaliencyMatrix, p: DpParams) -> float:
    """Evaluate the exact stage-one cost of an arbitrary window path."""
    r = np.asarray(r, dtype=float)
    n = sm.n_frames
    if len(r) != n:
        raise ValidationError("path length must match the frame count")
    ri = np.rint(r).astype(np.int64)
    if ri.min() < 0 or ri.max() >= sm.frame_width:
        raise ValidationError("path leaves the frame")
    total = float(sm.values[ri, np.arange(n)].sum())
    d = p.cut_rhythm
    for t in range(1, n):
        delta = abs(r[t] - r[t - 1])
        total += p.lam * transition_cost(r[t - 1], r[t], d, p)
        d = 1.0 if delta > p.jump_width else d + 1.0
    return total


def load_path_csv(source) -> PathEstimate:
    """Read a window-path CSV back (total_cost is not stored: NaN)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "frame,r,is_cut":
        raise ValidationError("not a window-path CSV (unexpected header)")
    r, cuts = [], []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValidationError(f"path line {i}: expected 3 fields")
        r.append(float(parts[1]))
        if int(parts[2]):
            cuts.append(int(parts[0]))
    return PathEstimate(np.array(r), cuts, float("nan"))


def save_path_csv(pe: PathEstimate, target) -> None:
    cuts = set(pe.cuts)
    lines = ["frame,r,is_cut"]
    for t, r in enumerate(pe.r, start=1):
        lines.append(f"{t},{r:.1f},{int(t in cuts)}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_text(payload, encoding="utf-8")
