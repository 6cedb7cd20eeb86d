"""Stage two: smooth virtual-camera trajectory.

Turns the rough window path into the final per-frame crop center x* and
zoom z by solving one convex QP over the whole timeline:

  - quadratic data term pulling x* toward the (delayed) rough path, with a
    deadzone of tau pixels so micro-deviations are free;
  - L1 penalties on first/second/third differences of both x* and z, which
    make the result piecewise static / constant-velocity / constant-
    acceleration instead of merely smooth;
  - quadratic zoom tracking toward the dispersion-driven targets;
  - hard bounds keeping the crop inside the frame, the pan speed under a
    cap, and z within [z_min, 1].

Around every cut the pull toward the reference and the higher-order
penalties are released so the jump stays sharp: transitions should be
sudden at a cut, not eased.  Absolute values enter the QP through bound
variables (u >= +-expr) with linear cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from . import qp
from .cuts import merge_cuts
from .dppath import PathEstimate
from .errors import SolverError, ValidationError
from .params import Geometry
from .zoom import ZoomTargets


@dataclass(frozen=True)
class OptParams:
    """Weights and limits of the trajectory program."""

    tau: float
    pan_speed_max: float
    lambda1: float = 5000.0
    lambda2: float = 500.0
    lambda3: float = 3000.0
    cut_padding: int = 5
    delay: int = 10
    z_min: float = 0.7
    lambda1z: float | None = None
    lambda2z: float | None = None
    lambda3z: float | None = None

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValidationError("penalty weights must be >= 0")
        for w in (self.lambda1z, self.lambda2z, self.lambda3z):
            if w is not None and w < 0:
                raise ValidationError("zoom penalty weights must be >= 0")
        if self.tau < 0:
            raise ValidationError("deadzone must be >= 0")
        if not self.pan_speed_max > 0:
            raise ValidationError("pan speed cap must be positive")
        if self.cut_padding < 0 or self.delay < 0:
            raise ValidationError("cut padding and delay must be >= 0")
        if not 0 < self.z_min <= 1:
            raise ValidationError("minimum zoom must be in (0, 1]")

    @property
    def zoom_weights(self) -> tuple[float, float, float]:
        return (self.lambda1 if self.lambda1z is None else self.lambda1z,
                self.lambda2 if self.lambda2z is None else self.lambda2z,
                self.lambda3 if self.lambda3z is None else self.lambda3z)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Final crop-center path, zoom, per-frame crop rects, merged cuts."""

    x_star: np.ndarray
    z: np.ndarray
    crop_rects: np.ndarray
    cuts_all: list[int]


@dataclass(frozen=True, eq=False)
class ProgramInfo:
    """Assembled QP plus the masks and references needed to interpret it."""

    prog: qp.ConvexProgram
    r_ref: np.ndarray
    rho: np.ndarray
    cuts: list[int]
    data_on: np.ndarray
    m1_on: np.ndarray
    m2_on: np.ndarray
    m3_on: np.ndarray
    vel_on: np.ndarray
    z_track_on: np.ndarray
    obj_const: float
    n_frames: int

    def split(self, v: np.ndarray):
        n = self.n_frames
        return v[:n], v[n:2 * n]


def _slices(n: int) -> dict[str, slice]:
    sizes = {"x": n, "z": n, "s": n,
             "u1": max(n - 1, 0), "u2": max(n - 2, 0), "u3": max(n - 3, 0),
             "w1": max(n - 1, 0), "w2": max(n - 2, 0), "w3": max(n - 3, 0)}
    out = {}
    off = 0
    for name, sz in sizes.items():
        out[name] = slice(off, off + sz)
        off += sz
    out["total"] = slice(0, off)
    return out


def delayed_reference(r: np.ndarray, cuts: list[int], delay: int) -> np.ndarray:
    """Shift the reference later by `delay` frames within each shot.

    The first frames of a shot hold the shot's initial value, so the
    virtual camera reacts to gaze like an operator would: slightly late,
    and never across a cut.
    """
    n = len(r)
    ref = np.empty(n)
    bounds = [1] + list(cuts) + [n + 1]
    for a, b in zip(bounds[:-1], bounds[1:]):
        idx = np.arange(a, b)
        src = np.maximum(idx - delay, a)
        ref[idx - 1] = r[src - 1]
    return ref


def _cut_masks(n: int, cuts: list[int], p: int):
    data_on = np.ones(n, dtype=bool)
    m1_on = np.ones(max(n - 1, 0), dtype=bool)
    m2_on = np.ones(max(n - 2, 0), dtype=bool)
    m3_on = np.ones(max(n - 3, 0), dtype=bool)
    vel_on = np.ones(max(n - 1, 0), dtype=bool)
    z_on = np.ones(n, dtype=bool)
    for c in cuts:
        lo = max(min(c, c - p), 1)
        hi = min(max(c, c + p - 1), n)
        data_on[lo - 1:hi] = False
        z_on[c - 1] = False
        m1_on[c - 2] = False
        vel_on[c - 2] = False
        _drop_overlapping(m2_on, 3, lo, hi)
        _drop_overlapping(m3_on, 4, lo, hi)
    return data_on, m1_on, m2_on, m3_on, vel_on, z_on


def _drop_overlapping(mask: np.ndarray, width: int, lo: int, hi: int):
    # stencil i (0-based) spans frames [i+1, i+width]
    a = max(lo - width, 0)
    b = min(hi - 1, len(mask) - 1)
    if b >= a:
        mask[a:b + 1] = False


def build_program(pe: PathEstimate, original_cuts: list[int],
                  zt: ZoomTargets, op: OptParams, geom: Geometry,
                  w_r: int) -> ProgramInfo:
    """Assemble the trajectory QP for the whole timeline."""
    n = geom.n_frames
    if len(pe.r) != n or len(zt.rho) != n:
        raise ValidationError("path, zoom targets and geometry disagree on N")
    if w_r > geom.frame_width:
        raise ValidationError("target width exceeds the frame width")
    cuts = merge_cuts(original_cuts, pe.cuts, n)
    r_ref = delayed_reference(np.asarray(pe.r, float), cuts, op.delay)
    rho = np.asarray(zt.rho, float)
    data_on, m1_on, m2_on, m3_on, vel_on, z_on = _cut_masks(
        n, cuts, op.cut_padding)

    sl = _slices(n)
    nv = sl["total"].stop
    ix = np.arange(n)
    lam1z, lam2z, lam3z = op.zoom_weights

    p_diag = np.zeros(nv)
    p_diag[sl["s"]] = 2.0
    p_diag[np.arange(nv)[sl["z"]][z_on]] = 2.0
    q = np.zeros(nv)
    q[np.arange(nv)[sl["z"]][z_on]] = -2.0 * rho[z_on]
    for name, lam, on in (("u1", op.lambda1, m1_on), ("u2", op.lambda2, m2_on),
                          ("u3", op.lambda3, m3_on), ("w1", lam1z, m1_on),
                          ("w2", lam2z, m2_on), ("w3", lam3z, m3_on)):
        q[np.arange(nv)[sl[name]][on]] = lam

    rows, cols, vals, lbs, ubs = [], [], [], [], []
    cursor = 0

    def add(entry_cols, entry_vals, lo, hi):
        # entry_cols/vals: list of per-row column/value arrays
        nonlocal cursor
        nr = len(lo)
        if nr == 0:
            return
        rid = cursor + np.arange(nr)
        for c, v in zip(entry_cols, entry_vals):
            rows.append(rid)
            cols.append(np.broadcast_to(c, (nr,)))
            vals.append(np.broadcast_to(np.asarray(v, float), (nr,)))
        lbs.append(np.asarray(lo, float))
        ubs.append(np.asarray(hi, float))
        cursor += nr

    inf = np.inf
    xof = sl["x"].start
    zof = sl["z"].start
    sof = sl["s"].start

    # crop center stays inside the frame; zoom and slack bounds
    add([xof + ix], [1.0], np.full(n, w_r / 2.0),
        np.full(n, geom.frame_width - w_r / 2.0))
    add([zof + ix], [1.0], np.full(n, op.z_min), np.ones(n))
    add([sof + ix], [1.0], np.zeros(n), np.full(n, inf))

    # deadzone slack: s >= |x - r_ref| - tau on frames with data pull
    d_idx = ix[data_on]
    add([xof + d_idx, sof + d_idx], [1.0, -1.0],
        np.full(len(d_idx), -inf), r_ref[data_on] + op.tau)
    add([xof + d_idx, sof + d_idx], [1.0, 1.0],
        r_ref[data_on] - op.tau, np.full(len(d_idx), inf))

    # pan-speed cap, released across cuts
    v_idx = np.arange(max(n - 1, 0))[vel_on]
    add([xof + v_idx + 1, xof + v_idx], [1.0, -1.0],
        np.full(len(v_idx), -op.pan_speed_max),
        np.full(len(v_idx), op.pan_speed_max))

    stencils = {1: [-1.0, 1.0], 2: [1.0, -2.0, 1.0], 3: [-1.0, 3.0, -3.0, 1.0]}
    for order, (uname, uon), base in (((1), ("u1", m1_on), xof),
                                      ((2), ("u2", m2_on), xof),
                                      ((3), ("u3", m3_on), xof),
                                      ((1), ("w1", m1_on), zof),
                                      ((2), ("w2", m2_on), zof),
                                      ((3), ("w3", m3_on), zof)):
        k = max(n - order, 0)
        t_on = np.arange(k)[uon]
        t_off = np.arange(k)[~uon]
        uof = sl[uname].start
        coeff = stencils[order]
        # u >= |difference|: two one-sided rows per active stencil
        for sgn in (-1.0, 1.0):
            ecols = [base + t_on + j for j in range(order + 1)]
            evals = list(coeff)
            ecols.append(uof + t_on)
            evals.append(sgn)
            if sgn < 0:
                add(ecols, evals, np.full(len(t_on), -inf), np.zeros(len(t_on)))
            else:
                add(ecols, evals, np.zeros(len(t_on)), np.full(len(t_on), inf))
        # released stencils: pin the bound variable so it stays defined
        add([uof + t_off], [1.0], np.zeros(len(t_off)), np.zeros(len(t_off)))

    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(cursor, nv)).tocsc()
    prog = qp.ConvexProgram(sparse.diags(p_diag).tocsc(), q, A,
                            np.concatenate(lbs), np.concatenate(ubs))
    obj_const = float(np.sum(rho[z_on] ** 2))
    return ProgramInfo(prog, r_ref, rho, cuts, data_on, m1_on, m2_on,
                       m3_on, vel_on, z_on, obj_const, n)


def objective_value(info: ProgramInfo, op: OptParams,
                    x: np.ndarray, z: np.ndarray) -> float:
    """Evaluate the trajectory cost functional directly (no QP encoding)."""
    dev = np.maximum(np.abs(x - info.r_ref) - op.tau, 0.0)
    total = float(np.sum(dev[info.data_on] ** 2))
    lams = (op.lambda1, op.lambda2, op.lambda3)
    zlams = op.zoom_weights
    for k, (lam, zlam, on) in enumerate(zip(lams, zlams, (info.m1_on,
                                        info.m2_on, info.m3_on)), start=1):
        if len(on):
            total += lam * np.sum(np.abs(np.diff(x, k))[on])
            total += zlam * np.sum(np.abs(np.diff(z, k))[on])
    total += float(np.sum((z[info.z_track_on] - info.rho[info.z_track_on]) ** 2))
    return total


def _repair(x: np.ndarray, z: np.ndarray, info: ProgramInfo,
            op: OptParams, geom: Geometry, w_r: int):
    lo = w_r / 2.0
    hi = geom.frame_width - w_r / 2.0
    z = np.clip(z, op.z_min, 1.0)
    x = x.copy()
    x[0] = min(max(x[0], lo), hi)
    for t in range(1, len(x)):
        a, b = lo, hi
        if info.vel_on[t - 1]:
            a = max(a, x[t - 1] - op.pan_speed_max)
            b = min(b, x[t - 1] + op.pan_speed_max)
        x[t] = min(max(x[t], a), b)
    return x, z


def _verify(x, z, info, op, geom, w_r, tol=1e-6):
    lo, hi = w_r / 2.0, geom.frame_width - w_r / 2.0
    ok = (x.min() >= lo - tol and x.max() <= hi + tol
          and z.min() >= op.z_min - tol and z.max() <= 1.0 + tol)
    if len(x) > 1:
        dx = np.abs(np.diff(x))[info.vel_on]
        ok = ok and (len(dx) == 0 or dx.max() <= op.pan_speed_max + tol)
    if not ok:
        raise SolverError("optimizer returned an out-of-bounds trajectory")


def crop_rects(x: np.ndarray, z: np.ndarray, geom: Geometry,
               w_r: int) -> np.ndarray:
    """Per-frame (left, top, width, height), centered on x and vertically."""
    height = z * geom.frame_height
    width = z * w_r
    top = (geom.frame_height - height) / 2.0
    left = np.clip(x - width / 2.0, 0.0, geom.frame_width - width)
    return np.column_stack([left, top, width, height])


def optimize_trajectory(pe: PathEstimate, original_cuts: list[int],
                        zt: ZoomTargets, op: OptParams, geom: Geometry,
                        w_r: int, eps_abs: float = 1e-6,
                        max_iters: int = 20000) -> Trajectory:
    """Solve the assembled program and return a feasible Trajectory.

    Raises SolverError with the final residuals when the QP does not
    converge; never returns a trajectory that violates the hard bounds.
    """
    info = build_program(pe, original_cuts, zt, op, geom, w_r)
    sol = qp.solve(info.prog, eps_abs=eps_abs, max_iters=max_iters)
    if sol.status != "solved":
        raise SolverError(
            f"trajectory solve ended with status {sol.status}",
            primal_residual=sol.primal_residual,
            dual_residual=sol.dual_residual)
    x, z = info.split(sol.x)
    x, z = _repair(x, z, info, op, geom, w_r)
    _verify(x, z, info, op, geom, w_r)
    return Trajectory(x, z, crop_rects(x, z, geom, w_r), info.cuts)


def load_croppath_csv(source) -> Trajectory:
    """Read a crop-path CSV back into a Trajectory."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "frame,x,z,left,top,width,height,is_cut":
        raise ValidationError("not a crop-path CSV (unexpected header)")
    xs, zs, rects, cuts = [], [], [], []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 8:
            raise ValidationError(f"crop-path line {i}: expected 8 fields")
        try:
            frame = int(parts[0])
            vals = [float(v) for v in parts[1:7]]
            is_cut = int(parts[7])
        except ValueError as exc:
            raise ValidationError(f"crop-path line {i}: {exc}") from exc
        if frame != i - 1:
            raise ValidationError(f"crop-path line {i}: frames must be 1..N "
                                  "in order")
        xs.append(vals[0])
        zs.append(vals[1])
        rects.append(vals[2:6])
        if is_cut:
            cuts.append(frame)
    if not xs:
        raise ValidationError("crop-path CSV has no rows")
    return Trajectory(np.array(xs), np.array(zs), np.array(rects), cuts)


def save_croppath_csv(traj: Trajectory, target) -> None:
    cuts = set(traj.cuts_all)
    lines = ["frame,x,z,left,top,width,height,is_cut"]
    for t in range(len(traj.x_star)):
        left, top, width, height = traj.crop_rects[t]
        lines.append(f"{t + 1},{traj.x_star[t]:.3f},{traj.z[t]:.6f},"
                     f"{left:.3f},{top:.3f},{width:.3f},{height:.3f},"
                     f"{int(t + 1 in cuts)}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_text(payload, encoding="utf-8")
