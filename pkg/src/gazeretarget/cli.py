"""Command-line entry points.

    retarget run <config.toml>            full pipeline from a config
    retarget synth <spec.toml> -o out.csv synthetic gaze generator
    retarget score <gaze.csv> <croppath.csv> --width W --height H
    retarget plot <run-dir>               regenerate the SVG for a run

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import ingest, metrics, pipeline, plotting, synthgaze, trajectory
from .dppath import load_path_csv
from .errors import SolverError, ValidationError
from .params import Geometry


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="retarget",
        description="Gaze-driven video retargeting: compute a virtual "
                    "pan/zoom/cut camera path from recorded gaze.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline from a config")
    p_run.add_argument("config", help="TOML run configuration")

    p_synth = sub.add_parser("synth", help="generate synthetic gaze data")
    p_synth.add_argument("spec", help="TOML synthesis spec")
    p_synth.add_argument("-o", "--output", required=True,
                         help="gaze CSV to write")
    p_synth.add_argument("--seed", type=int, default=None,
                         help="override the spec's RNG seed")

    p_score = sub.add_parser("score",
                             help="included-gaze percentage of a crop path")
    p_score.add_argument("gaze", help="gaze CSV")
    p_score.add_argument("croppath", help="crop-path CSV")
    p_score.add_argument("--width", type=int, required=True,
                         help="source frame width, px")
    p_score.add_argument("--height", type=int, required=True,
                         help="source frame height, px")
    p_score.add_argument("--fps", type=float, default=25.0)

    p_plot = sub.add_parser("plot", help="regenerate the plot for a run dir")
    p_plot.add_argument("run_dir", help="directory written by `retarget run`")
    return ap


def _cmd_run(args) -> int:
    cfg = pipeline.load_config(args.config)
    result = pipeline.run_pipeline(cfg)
    print(f"run complete: {len(result.traj.x_star)} frames, "
          f"{len(result.traj.cuts_all)} cut(s), "
          f"{result.inclusion.included_pct:.2f}% gaze included")
    print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_synth(args) -> int:
    path = Path(args.spec)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"spec {path}: {exc}") from exc
    geo = raw.pop("geometry", None)
    if not isinstance(geo, dict):
        raise ValidationError("spec needs a [geometry] table")
    try:
        geometry = Geometry(int(geo["frame_width"]), int(geo["frame_height"]),
                            float(geo["fps"]), int(geo["n_frames"]))
    except KeyError as exc:
        raise ValidationError(f"[geometry] is missing {exc.args[0]}") from exc
    seed = raw.pop("seed", 0)
    if args.seed is not None:
        seed = args.seed
    try:
        spec = synthgaze.SynthSpec(geometry=geometry, **raw)
    except TypeError as exc:
        raise ValidationError(f"bad synthesis spec: {exc}") from exc
    gs = synthgaze.generate(spec, seed=int(seed))
    ingest.save_gaze(gs, args.output)
    print(f"wrote {len(gs)} samples ({gs.n_users} users x "
          f"{geometry.n_frames} frames) to {args.output}")
    return 0


def _cmd_score(args) -> int:
    traj = trajectory.load_croppath_csv(args.croppath)
    geometry = Geometry(args.width, args.height, args.fps,
                        len(traj.x_star))
    gs = ingest.load_gaze(args.gaze, geometry)
    report = metrics.included_gaze(gs, traj)
    print(report.to_json())
    return 0


def _cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / "report.json"
    if not report_path.is_file():
        raise ValidationError(f"{run_dir} has no report.json; "
                              "is it a run directory?")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    geo = report["geometry"]
    geometry = Geometry(geo["frame_width"], geo["frame_height"],
                        geo["fps"], geo["n_frames"])
    gs = ingest.load_gaze(report["gaze_file"], geometry)
    traj = trajectory.load_croppath_csv(run_dir / "croppath.csv")
    path_file = run_dir / "path.csv"
    rough = load_path_csv(path_file).r if path_file.is_file() else None
    target = run_dir / "plot.svg"
    plotting.plot_run(gs, rough, traj, target)
    print(f"wrote {target}")
    return 0


_COMMANDS = {"run": _cmd_run, "synth": _cmd_synth,
             "score": _cmd_score, "plot": _cmd_plot}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        _fail(exc)
        return 2
    except SolverError as exc:
        _fail(exc)
        return 3
    except OSError as exc:
        _fail(exc)
        return 4


def _fail(exc: Exception) -> None:
    stage = getattr(exc, "stage", None)
    where = f" in {stage} stage" if stage else ""
    print(f"retarget: error{where}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
