"""Gaze-driven video retargeting.

Converts multi-user gaze recordings into an edited virtual-camera path
(per-frame crop position, zoom, and new cuts) for a target aspect ratio,
in two stages: a dynamic-programming search over window positions,
followed by one convex program that smooths the path under hard pan-speed
and inclusion constraints.
"""

from .cuts import load_cuts_file, merge_cuts, shot_segments, validate_cuts
from .dppath import (DpParams, PathEstimate, optimize_path, path_cost,
                     save_path_csv, transition_cost)
from .errors import (EmptyInputError, GazeParseError, SolverError,
                     ValidationError)
from .fixation import (DispersionSeries, Fixation, detect_fixations,
                       dispersion_series)
from .ingest import (GazeSample, GazeSet, IngestSummary, gaze_column,
                     load_gaze, parse_gaze, save_gaze)
from .metrics import GazeInclusionReport, centered_baseline, included_gaze
from .params import Geometry, Params, parse_aspect
from .pipeline import RunConfig, RunResult, load_config, run_pipeline
from .qp import ConvexProgram, Solution, solve
from .saliency import SaliencyMatrix, build_saliency, unary_cost
from .shotdetect import detect_cuts_naive
from .synthgaze import SynthSpec, generate
from .trajectory import (OptParams, Trajectory, build_program,
                         crop_rects, load_croppath_csv, objective_value,
                         optimize_trajectory, save_croppath_csv)
from .zoom import ZoomTargets, compute_zoom_targets

__version__ = "0.1.0"

__all__ = [
    "ConvexProgram", "DispersionSeries", "DpParams", "EmptyInputError",
    "Fixation", "GazeInclusionReport", "GazeParseError", "GazeSample",
    "GazeSet", "Geometry", "IngestSummary", "OptParams", "Params",
    "PathEstimate", "RunConfig", "RunResult", "SaliencyMatrix", "Solution",
    "SolverError", "SynthSpec", "Trajectory", "ValidationError",
    "ZoomTargets", "build_program", "build_saliency", "centered_baseline",
    "compute_zoom_targets", "crop_rects", "detect_cuts_naive",
    "detect_fixations", "dispersion_series", "gaze_column", "generate",
    "included_gaze", "load_config", "load_croppath_csv", "load_cuts_file",
    "load_gaze", "merge_cuts", "objective_value", "optimize_path",
    "optimize_trajectory", "parse_aspect", "parse_gaze", "path_cost",
    "run_pipeline", "save_croppath_csv", "save_gaze", "save_path_csv",
    "shot_segments", "solve", "transition_cost", "unary_cost",
    "validate_cuts",
]
