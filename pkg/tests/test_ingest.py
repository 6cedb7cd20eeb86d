"""Gaze record parsing, validation policy, and round-trips."""

import io
import json
import math

import numpy as np
import pytest

from gazeretarget import (
    EmptyInputError,
    GazeParseError,
    Geometry,
    ValidationError,
    gaze_column,
    load_gaze,
    parse_gaze,
    save_gaze,
)
from gazeretarget.ingest import GazeSet

from conftest import build_gazeset

GEOM = Geometry(frame_width=200, frame_height=100, fps=30.0, n_frames=10)


def as_csv(*rows):
    return "user,frame,x,y\n" + "\n".join(rows) + "\n"


def test_single_record_fields():
    gs, summary = parse_gaze(io.StringIO(as_csv("1,3,100.0,50.0")), GEOM)
    assert gs.n_users == 1
    sample = gs.samples[0]
    assert sample.user_id == 1
    assert sample.frame == 3
    assert sample.x == 100.0
    assert sample.y == 50.0
    assert sample.valid
    assert summary.n_records == 1
    assert summary.n_dropped == 0


def test_out_of_bounds_sample_marked_invalid():
    text = as_csv("1,3,-5.0,50.0", "1,4,10.0,50.0")
    gs, summary = parse_gaze(io.StringIO(text), GEOM)
    assert list(gs.valid) == [False, True]
    assert summary.n_invalidated == 1
    # the raw coordinate is preserved on the invalid row
    assert gs.xs[0] == -5.0


@pytest.mark.parametrize("coord", ["200.0,50.0", "100.0,100.0", "nan,50.0",
                                   "100.0,-0.001"])
def test_boundary_and_missing_coordinates_invalid(coord):
    # valid range is [0, width) x [0, height); NaN means a dropout
    text = as_csv(f"1,1,{coord}", "1,2,0.0,0.0")
    gs, summary = parse_gaze(io.StringIO(text), GEOM)
    assert not gs.valid[0]
    assert gs.valid[1]
    assert summary.n_invalidated == 1


def test_five_users_hundred_frames():
    geom = Geometry(200, 100, 30.0, 100)
    rows = [f"{u},{t},{50 + u}.0,{20 + t % 7}.0"
            for u in range(1, 6) for t in range(1, 101)]
    gs, summary = parse_gaze(io.StringIO(as_csv(*rows)), geom)
    assert len(gs) == 500
    assert gs.n_users == 5
    assert summary.n_records == 500
    assert summary.n_dropped == 0


def test_gaze_column_returns_valid_x_only():
    gs = build_gazeset(
        [(1, 1, 10.0, 5.0), (2, 1, 20.0, 5.0),
         (1, 3, 30.0, 5.0), (2, 3, 170.0, 5.0, False)],
        GEOM,
    )
    assert sorted(gaze_column(gs, 1)) == [10.0, 20.0]
    assert list(gaze_column(gs, 2)) == []
    assert list(gaze_column(gs, 3)) == [30.0]


def test_gaze_column_rejects_out_of_range_frame():
    gs = build_gazeset([(1, 1, 10.0, 5.0)], GEOM)
    with pytest.raises(IndexError):
        gaze_column(gs, 0)
    with pytest.raises(IndexError):
        gaze_column(gs, GEOM.n_frames + 1)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    rows = []
    for u in range(1, 4):
        for t in range(1, 11):
            rows.append((u, t, rng.uniform(0, 200), rng.uniform(0, 100)))
    rows.append((9, 5, -12.5, 40.0, False))  # stays invalid through the trip
    gs = build_gazeset(rows, GEOM)
    path = tmp_path / "gaze.csv"
    save_gaze(gs, path)
    assert load_gaze(path, GEOM) == gs


def test_round_trip_preserves_nan_dropout(tmp_path):
    gs = build_gazeset([(1, 1, 10.0, 5.0), (1, 2, math.nan, math.nan, False)],
                       GEOM)
    path = tmp_path / "gaze.csv"
    save_gaze(gs, path)
    assert load_gaze(path, GEOM) == gs


def test_record_count_conservation(caplog):
    text = as_csv(
        "1,1,10.0,5.0",
        "1,11,10.0,5.0",   # frame past the end: rejected
        "1,1,99.0,5.0",    # duplicate (user, frame): dropped, first kept
        "2,2,-1.0,5.0",    # kept but invalid
    )
    with caplog.at_level("WARNING", logger="gazeretarget.ingest"):
        gs, summary = parse_gaze(io.StringIO(text), GEOM)
    assert summary.n_records == 4
    assert summary.n_rejected == 1
    assert summary.n_duplicates == 1
    assert summary.n_invalidated == 1
    assert len(gs) == summary.n_records - summary.n_dropped == 2
    assert gs.xs[list(gs.frames).index(1)] == 10.0
    assert any("rejected" in r.getMessage() for r in caplog.records)


def test_time_header_maps_to_frames():
    text = "user,time_s,x,y\n1,0.0,10.0,5.0\n1,0.099,20.0,5.0\n"
    gs, _ = parse_gaze(io.StringIO(text), GEOM)
    # frame index is floor(time * fps) + 1
    assert sorted(gs.frames) == [1, 3]


def test_malformed_value_reports_line_number():
    text = as_csv("1,1,10.0,5.0", "1,2,oops,5.0")
    with pytest.raises(GazeParseError) as exc:
        parse_gaze(io.StringIO(text), GEOM)
    assert "line 3" in str(exc.value)


def test_unknown_header_rejected():
    with pytest.raises(GazeParseError):
        parse_gaze(io.StringIO("a,b,c,d\n1,1,1.0,1.0\n"), GEOM)


def test_wrong_field_count_reports_line():
    text = as_csv("1,1,10.0")
    with pytest.raises(GazeParseError) as exc:
        parse_gaze(io.StringIO(text), GEOM)
    assert "line 2" in str(exc.value)


def test_no_valid_samples_raises():
    with pytest.raises(EmptyInputError):
        parse_gaze(io.StringIO(as_csv("1,1,-5.0,5.0", "1,2,-6.0,5.0")), GEOM)
    with pytest.raises(EmptyInputError):
        parse_gaze(io.StringIO("user,frame,x,y\n"), GEOM)


def test_json_list_matches_csv():
    csv_gs, _ = parse_gaze(io.StringIO(as_csv("1,3,100.0,50.0",
                                              "2,4,20.0,10.0")), GEOM)
    payload = json.dumps([
        {"user": 1, "frame": 3, "x": 100.0, "y": 50.0},
        {"user": 2, "frame": 4, "x": 20.0, "y": 10.0},
    ])
    json_gs, _ = parse_gaze(io.StringIO(payload), GEOM)
    assert json_gs == csv_gs

    wrapped, _ = parse_gaze(io.StringIO(json.dumps({"samples": [
        {"user": 1, "frame": 3, "x": 100.0, "y": 50.0},
        {"user": 2, "frame": 4, "x": 20.0, "y": 10.0},
    ]})), GEOM)
    assert wrapped == csv_gs


def test_json_time_field():
    payload = json.dumps([{"user": 1, "time_s": 0.099, "x": 1.0, "y": 1.0}])
    gs, _ = parse_gaze(io.StringIO(payload), GEOM)
    assert list(gs.frames) == [3]


def test_broken_json_raises_parse_error():
    with pytest.raises(GazeParseError):
        parse_gaze(io.StringIO('[{"user": 1, '), GEOM)
    with pytest.raises(GazeParseError):
        parse_gaze(io.StringIO('[{"frame": 1, "x": 1.0, "y": 1.0}]'), GEOM)
    with pytest.raises(GazeParseError):
        parse_gaze(io.StringIO('[{"user": 1, "x": 1.0, "y": 1.0}]'), GEOM)


def test_json_missing_coordinate_is_dropout():
    payload = json.dumps([
        {"user": 1, "frame": 1, "x": 5.0, "y": 5.0},
        {"user": 1, "frame": 2, "y": 5.0},
    ])
    gs, summary = parse_gaze(io.StringIO(payload), GEOM)
    assert summary.n_invalidated == 1
    assert list(gs.valid) == [True, False]


def test_geometry_validation():
    with pytest.raises(ValidationError):
        Geometry(0, 100, 30.0, 10)
    with pytest.raises(ValidationError):
        Geometry(200, 100, 0.0, 10)
    with pytest.raises(ValidationError):
        Geometry(200, 100, 30.0, 0)


def test_gazeset_rejects_inconsistent_columns():
    with pytest.raises(ValidationError):
        GazeSet(np.array([1]), np.array([1, 2]), np.array([1.0]),
                np.array([1.0]), np.array([True]), GEOM)
    with pytest.raises(EmptyInputError):
        GazeSet(np.array([1]), np.array([1]), np.array([-1.0]),
                np.array([1.0]), np.array([False]), GEOM)


def test_gazeset_rejects_nan_marked_valid():
    with pytest.raises(ValidationError):
        GazeSet(np.array([1]), np.array([1]), np.array([float("nan")]),
                np.array([1.0]), np.array([True]), GEOM)
    with pytest.raises(ValidationError):
        GazeSet(np.array([1]), np.array([1]), np.array([1.0]),
                np.array([float("nan")]), np.array([True]), GEOM)
