"""End-to-end batch pipeline driven by a TOML config.

Stages run in order: ingest, fixation, saliency, path search, zoom,
trajectory, scoring.  Every artifact write happens after all compute
succeeds, and partially written outputs are removed on failure, so a run
directory either holds a complete result or none.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import fixation, ingest, metrics, plotting, saliency, trajectory, zoom
from .cuts import load_cuts_file, merge_cuts
from .dppath import DpParams, PathEstimate, optimize_path, save_path_csv
from .errors import ValidationError
from .params import Geometry, Params, parse_aspect

logger = logging.getLogger(__name__)

# accepted [params] keys -> Params field (short symbol names first)
_PARAM_KEYS = {
    "lambda": "lam", "lam": "lam",
    "sigma": "sigma_px", "sigma_px": "sigma_px",
    "D": "cut_rhythm", "cut_rhythm": "cut_rhythm",
    "W": "jump_width", "jump_width": "jump_width",
    "lambda1": "lambda1", "lambda2": "lambda2", "lambda3": "lambda3",
    "tau": "tau",
    "pan_speed_max": "pan_speed_max",
    "p": "cut_padding", "cut_padding": "cut_padding",
    "delay": "delay",
    "z_min": "z_min",
    "state_stride": "state_stride",
    "fix_t1": "fix_t1", "fix_t2": "fix_t2",
    "fix_min_dur_ms": "fix_min_dur_ms",
}


@dataclass
class RunConfig:
    gaze_path: Path
    geometry: Geometry
    aspect: float
    out_dir: Path
    cuts_path: Path | None = None
    params: Params = field(default_factory=Params)
    emit_plot: bool = False
    emit_script: bool = False
    emit_debug: bool = False


@dataclass
class RunResult:
    out_dir: Path
    report: dict
    gs: ingest.GazeSet
    pe: PathEstimate
    traj: trajectory.Trajectory
    inclusion: metrics.GazeInclusionReport
    artifacts: list[Path]


def load_config(path) -> RunConfig:
    """Parse and validate a run config (TOML)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config {path}: {exc}") from exc

    def section(name, required=True):
        sec = raw.get(name)
        if sec is None:
            if required:
                raise ValidationError(f"config is missing the [{name}] table")
            return {}
        if not isinstance(sec, dict):
            raise ValidationError(f"[{name}] must be a table")
        return dict(sec)

    geo = section("geometry")
    try:
        geometry = Geometry(int(geo.pop("frame_width")),
                            int(geo.pop("frame_height")),
                            float(geo.pop("fps")),
                            int(geo.pop("n_frames")))
    except KeyError as exc:
        raise ValidationError(f"[geometry] is missing {exc.args[0]}") from exc
    if geo:
        raise ValidationError(f"unknown [geometry] keys: {sorted(geo)}")

    inp = section("input")
    gaze = inp.pop("gaze", None)
    if gaze is None:
        raise ValidationError("[input] must name a gaze file")
    cuts = inp.pop("cuts", None)
    if inp:
        raise ValidationError(f"unknown [input] keys: {sorted(inp)}")

    out = section("output")
    out_dir = out.pop("dir", None)
    if out_dir is None:
        raise ValidationError("[output] must name a dir")
    aspect = parse_aspect(out.pop("aspect", "4:3"))
    emit_plot = bool(out.pop("emit_plot", False))
    emit_script = bool(out.pop("emit_script", False))
    emit_debug = bool(out.pop("emit_debug", False))
    if out:
        raise ValidationError(f"unknown [output] keys: {sorted(out)}")

    par = section("params", required=False)
    kwargs = {}
    for key, value in par.items():
        if key not in _PARAM_KEYS:
            raise ValidationError(
                f"unknown [params] key {key!r}; accepted: "
                f"{sorted(set(_PARAM_KEYS))}")
        kwargs[_PARAM_KEYS[key]] = value
    params = Params(**kwargs)

    base = path.parent
    return RunConfig(
        gaze_path=(base / gaze).resolve(),
        geometry=geometry,
        aspect=aspect,
        out_dir=(base / out_dir).resolve(),
        cuts_path=(base / cuts).resolve() if cuts else None,
        params=params,
        emit_plot=emit_plot,
        emit_script=emit_script,
        emit_debug=emit_debug,
    )


class _Stage:
    """Tags exceptions with the pipeline stage they came from."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            exc.stage = self.name
        return False


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Execute all stages and write the run artifacts."""
    geom = cfg.geometry
    w_r = geom.retarget_width(cfg.aspect)
    p = cfg.params.resolve(geom, w_r)

    with _Stage("ingest"):
        gs, summary = ingest.parse_gaze(cfg.gaze_path, geom)
        original_cuts = (load_cuts_file(cfg.cuts_path, geom.n_frames)
                         if cfg.cuts_path else [])

    with _Stage("fixation"):
        fixations = fixation.detect_fixations(gs, p.fix_t1, p.fix_t2,
                                              p.fix_min_dur_ms)
        ds = fixation.dispersion_series(fixations, gs)

    with _Stage("saliency"):
        sm = saliency.build_saliency(gs, p.sigma_px)

    with _Stage("path-search"):
        pe = optimize_path(sm, DpParams(p.lam, p.jump_width,
                                        p.cut_rhythm, p.state_stride))
        kept = [c for c in pe.cuts if 2 <= c <= geom.n_frames - 1]
        if kept != pe.cuts:
            logger.warning("dropping %d cut(s) at the timeline edges",
                           len(pe.cuts) - len(kept))
            pe = PathEstimate(pe.r, kept, pe.total_cost)
        merged = merge_cuts(original_cuts, pe.cuts, geom.n_frames)

    with _Stage("zoom"):
        zt = zoom.compute_zoom_targets(ds, merged)

    with _Stage("trajectory"):
        op = trajectory.OptParams(
            tau=p.tau, pan_speed_max=p.pan_speed_max, lambda1=p.lambda1,
            lambda2=p.lambda2, lambda3=p.lambda3, cut_padding=p.cut_padding,
            delay=p.delay, z_min=p.z_min)
        traj = trajectory.optimize_trajectory(pe, original_cuts, zt, op,
                                              geom, w_r)

    with _Stage("scoring"):
        inclusion = metrics.included_gaze(gs, traj)

    report = {
        "gaze_file": str(cfg.gaze_path),
        "aspect": cfg.aspect,
        "retarget_width": w_r,
        "geometry": dataclasses.asdict(geom),
        "params": dataclasses.asdict(p),
        "cuts": {"original": original_cuts, "new": pe.cuts,
                 "all": traj.cuts_all},
        "ingest": {"n_records": summary.n_records,
                   "n_rejected": summary.n_rejected,
                   "n_duplicates": summary.n_duplicates,
                   "n_invalidated": summary.n_invalidated},
        "n_fixations": len(fixations),
        "dispersion_defined_pct":
            100.0 * float(ds.defined_mask.mean()),
        "path_total_cost": pe.total_cost,
        "included_pct": inclusion.included_pct,
        "n_samples": inclusion.n_samples,
    }

    with _Stage("emit"):
        artifacts = _emit(cfg, gs, pe, traj, report, fixations, ds, zt, sm)

    return RunResult(cfg.out_dir, report, gs, pe, traj, inclusion, artifacts)


def _emit(cfg, gs, pe, traj, report, fixations, ds, zt, sm) -> list[Path]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        def emit(name, writer):
            target = out / name
            writer(target)
            written.append(target)

        emit("croppath.csv",
             lambda t: trajectory.save_croppath_csv(traj, t))
        emit("path.csv", lambda t: save_path_csv(pe, t))
        emit("report.json", lambda t: t.write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n",
            encoding="utf-8"))
        if cfg.emit_script:
            emit("crop_script.txt", lambda t: _write_crop_script(traj, t))
        if cfg.emit_debug:
            emit("fixations.csv",
                 lambda t: fixation.save_fixations_csv(fixations, t))
            emit("zoom.csv", lambda t: zoom.save_zoom_csv(ds, zt, t))
            emit("saliency.pgm", lambda t: saliency.save_pgm(sm, t))
        if cfg.emit_plot:
            emit("plot.svg",
                 lambda t: plotting.plot_run(gs, pe.r, traj, t))
    except BaseException:
        for f in written:
            f.unlink(missing_ok=True)
        raise
    return written


def _write_crop_script(traj: trajectory.Trajectory, target) -> None:
    """One line per run of identical crop rectangles.

    Rectangle strings match croppath.csv exactly, so an external encoder
    driven by this plan crops the same pixels the CSV describes.
    """
    rows = []
    for t in range(len(traj.x_star)):
        left, top, width, height = traj.crop_rects[t]
        rows.append(f"{left:.3f},{top:.3f},{width:.3f},{height:.3f}")
    lines = ["# crop plan: start_frame,end_frame,left,top,width,height"]
    start = 0
    for t in range(1, len(rows) + 1):
        if t == len(rows) or rows[t] != rows[start]:
            lines.append(f"{start + 1},{t},{rows[start]}")
            start = t
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        Path(target).write_text(payload, encoding="utf-8")
