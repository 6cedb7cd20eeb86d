"""Trajectory program assembly and solve, cross-checked with a generic solver."""

import io
import math

import cvxpy as cp
import numpy as np
import pytest

from gazeretarget import (
    Geometry,
    OptParams,
    PathEstimate,
    SolverError,
    Trajectory,
    ValidationError,
    ZoomTargets,
    optimize_trajectory,
)
from gazeretarget.trajectory import (
    _cut_masks,
    build_program,
    crop_rects,
    delayed_reference,
    load_croppath_csv,
    objective_value,
    save_croppath_csv,
)
from gazeretarget import qp


def flat_zoom(n):
    return ZoomTargets(np.ones(n), np.zeros(n))


def estimate(r, cuts=()):
    return PathEstimate(np.asarray(r, dtype=float), list(cuts), float("nan"))


def cvxpy_reference(info, op, geom, w_r):
    """Solve the same functional with cvxpy's natural formulation."""
    n = info.n_frames
    x = cp.Variable(n)
    z = cp.Variable(n)
    terms = []
    if info.data_on.any():
        dev = cp.abs(x[info.data_on] - info.r_ref[info.data_on]) - op.tau
        terms.append(cp.sum_squares(cp.pos(dev)))
    lams = (op.lambda1, op.lambda2, op.lambda3)
    zlams = op.zoom_weights
    masks = (info.m1_on, info.m2_on, info.m3_on)
    for k in range(3):
        if len(masks[k]) and masks[k].any():
            terms.append(lams[k] * cp.norm1(cp.diff(x, k + 1)[masks[k]]))
            terms.append(zlams[k] * cp.norm1(cp.diff(z, k + 1)[masks[k]]))
    if info.z_track_on.any():
        terms.append(cp.sum_squares(z[info.z_track_on]
                                    - info.rho[info.z_track_on]))
    cons = [x >= w_r / 2.0, x <= geom.frame_width - w_r / 2.0,
            z >= op.z_min, z <= 1.0]
    if len(info.vel_on) and info.vel_on.any():
        cons.append(cp.abs(cp.diff(x, 1))[info.vel_on] <= op.pan_speed_max)
    prob = cp.Problem(cp.Minimize(cp.sum(terms)), cons)
    # the large pan weights make loose first-order solves drift; insist
    # on tight settings, falling back across solvers if one gives up
    prob.solve(solver=cp.OSQP, eps_abs=1e-9, eps_rel=1e-9, max_iter=300000)
    if prob.status != "optimal":
        prob.solve(solver=cp.CLARABEL, max_iter=400)
    assert prob.status in ("optimal", "optimal_inaccurate")
    return x.value, z.value, float(prob.value)


def test_cut_masks_follow_the_relaxation_windows():
    data, m1, m2, m3, vel, z = _cut_masks(30, [10], 3)
    assert list(np.flatnonzero(~data)) == [6, 7, 8, 9, 10, 11]
    assert list(np.flatnonzero(~m1)) == [8]
    assert list(np.flatnonzero(~vel)) == [8]
    assert list(np.flatnonzero(~z)) == [9]
    # width-3 stencil j covers frames j+1..j+3; off iff it touches 7..12
    assert list(np.flatnonzero(~m2)) == [j for j in range(28)
                                         if j + 1 <= 12 and j + 3 >= 7]
    assert list(np.flatnonzero(~m3)) == [j for j in range(27)
                                         if j + 1 <= 12 and j + 4 >= 7]


def test_cut_masks_zero_padding_keeps_only_the_cut_frame():
    data, m1, m2, m3, vel, z = _cut_masks(30, [10], 0)
    assert list(np.flatnonzero(~data)) == [9]
    assert list(np.flatnonzero(~m1)) == [8]
    assert list(np.flatnonzero(~m2)) == [7, 8, 9]
    assert list(np.flatnonzero(~m3)) == [6, 7, 8, 9]


def test_cut_masks_clip_at_the_edges():
    data, m1, m2, m3, vel, z = _cut_masks(30, [2], 5)
    assert list(np.flatnonzero(~data)) == [0, 1, 2, 3, 4, 5]
    assert list(np.flatnonzero(~m1)) == [0]
    assert not data[0]


def test_delayed_reference_shifts_within_shots():
    r = np.arange(100.0, 120.0)
    ref = delayed_reference(r, [11], 3)
    want = np.empty(20)
    for t in range(1, 21):
        shot_start = 11 if t >= 11 else 1
        want[t - 1] = r[max(t - 3, shot_start) - 1]
    assert np.array_equal(ref, want)
    assert np.array_equal(delayed_reference(r, [11], 0), r)
    # the first delayed frames of each shot hold the shot's opening value
    assert np.all(ref[:3] == r[0])
    assert np.all(ref[10:13] == r[10])


def make_geom(n, width=1000, height=500):
    return Geometry(width, height, 30.0, n)


def test_constant_reference_yields_static_camera():
    n = 40
    geom = make_geom(n)
    pe = estimate(np.full(n, 430.0))
    op = OptParams(tau=24.0, pan_speed_max=8.0, delay=0)
    traj = optimize_trajectory(pe, [], flat_zoom(n), op, geom, 240)
    # any constant inside the deadzone is optimal; require a static path
    # in that band, not the reference value itself
    assert np.ptp(traj.x_star) < 1e-4
    assert np.all(np.abs(traj.x_star - 430.0) <= 24.0 + 1e-4)
    assert traj.z == pytest.approx(np.ones(n), abs=1e-5)
    assert traj.cuts_all == []
    info = build_program(pe, [], flat_zoom(n), op, geom, 240)
    # the reference itself achieves zero cost, so the optimum must too
    assert objective_value(info, op, traj.x_star, traj.z) <= 1e-6
    assert objective_value(info, op, np.full(n, 430.0), np.ones(n)) == 0.0


def test_ramp_reference_eases_like_a_parabola():
    n = 120
    geom = make_geom(n, width=1600)
    r = 200.0 + 2.0 * np.arange(n)
    pe = estimate(r)
    op = OptParams(tau=0.0, pan_speed_max=10.0, delay=0)
    info = build_program(pe, [], flat_zoom(n), op, geom, 300)
    sol = qp.solve(info.prog)
    assert sol.status == "solved"
    x, z = info.split(sol.x)
    want_x, _, want_obj = cvxpy_reference(info, op, geom, 300)
    # tau=0 makes the data term strictly convex, so paths agree pointwise
    assert x == pytest.approx(want_x, abs=1e-3)
    scale = 1.0 + abs(want_obj)
    assert abs(objective_value(info, op, x, z) - want_obj) <= 2e-5 * scale
    d2 = np.diff(x, 2)
    # static at the timeline ends, one smooth sweep in between
    assert np.abs(d2[:15]).max() < 1e-3
    assert np.abs(d2[-15:]).max() < 1e-3
    assert np.abs(d2).max() > 1e-2
    # piecewise parabolic: acceleration changes at a handful of frames
    assert np.count_nonzero(np.abs(np.diff(x, 3)) > 1e-3) <= 8


def test_single_cut_stays_flat_around_the_jump():
    n = 120
    k = 60
    geom = make_geom(n, width=1600)
    r = np.where(np.arange(1, n + 1) < k, 400.0, 700.0)
    pe = estimate(r, [k])
    op = OptParams(tau=0.0, pan_speed_max=6.0, cut_padding=5, delay=0)
    traj = optimize_trajectory(pe, [], flat_zoom(n), op, geom, 300)
    x = traj.x_star
    jump = abs(x[k - 1] - x[k - 2])
    assert jump > 250.0  # the velocity cap does not apply across the cut
    before = x[k - 1 - 5:k - 1]
    after = x[k - 1:k + 5]
    assert np.abs(np.diff(before)).sum() < 0.5
    assert np.abs(np.diff(after)).sum() < 0.5


def test_matches_generic_solver_on_random_instances():
    rng = np.random.default_rng(31)
    for trial in range(6):
        n = int(rng.integers(12, 60))
        width = int(rng.integers(400, 900))
        w_r = int(rng.integers(100, width // 2))
        geom = Geometry(width, int(rng.integers(200, 500)), 25.0, n)
        lo, hi = w_r / 2.0, width - w_r / 2.0
        r = np.empty(n)
        cuts = []
        pos = rng.uniform(lo, hi)
        for t in range(n):
            if t > 0 and rng.uniform() < 0.08 and 2 <= t + 1 <= n - 1:
                pos = rng.uniform(lo, hi)
                cuts.append(t + 1)
            else:
                pos = float(np.clip(pos + rng.normal(0.0, 4.0), lo, hi))
            r[t] = pos
        split_at = len(cuts) // 2
        pe = estimate(r, cuts[split_at:])
        original = cuts[:split_at]
        rho = rng.uniform(0.7, 1.0, n)
        zt = ZoomTargets(rho, np.zeros(n))
        op = OptParams(
            tau=float(rng.uniform(0.0, 15.0)),
            pan_speed_max=float(rng.uniform(3.0, 15.0)),
            lambda1=float(10 ** rng.uniform(0.5, 3.7)),
            lambda2=float(10 ** rng.uniform(0.0, 3.0)),
            lambda3=float(10 ** rng.uniform(0.0, 3.5)),
            cut_padding=int(rng.integers(0, 6)),
            delay=0)
        info = build_program(pe, original, zt, op, geom, w_r)
        sol = qp.solve(info.prog)
        assert sol.status == "solved"
        x, z = info.split(sol.x)
        direct = objective_value(info, op, x, z)
        encoded = sol.objective_value + info.obj_const
        scale = 1.0 + abs(direct)
        # slack encoding and the plain functional agree at the optimum
        assert abs(direct - encoded) <= 5e-5 * scale
        _, _, want_obj = cvxpy_reference(info, op, geom, w_r)
        assert abs(direct - want_obj) <= 5e-5 * (1.0 + abs(want_obj))


def test_pursuit_hits_the_exact_velocity_cap():
    n = 80
    geom = make_geom(n, width=2000)
    r = 200.0 + 20.0 * np.arange(n)  # faster than the cap
    pe = estimate(r)
    op = OptParams(tau=0.0, pan_speed_max=12.0, delay=0)
    traj = optimize_trajectory(pe, [], flat_zoom(n), op, geom, 300)
    steps = np.abs(np.diff(traj.x_star))
    assert steps.max() <= 12.0 + 1e-9
    assert steps.max() >= 12.0 - 1e-6  # saturates while catching up


def test_fixation_like_input_is_static():
    rng = np.random.default_rng(33)
    n = 90
    geom = make_geom(n)
    r = 430.0 + rng.normal(0.0, 3.0, n)  # jitter well inside the deadzone
    pe = estimate(r)
    op = OptParams(tau=24.0, pan_speed_max=8.0, delay=0)
    traj = optimize_trajectory(pe, [], flat_zoom(n), op, geom, 240)
    assert np.abs(np.diff(traj.x_star)).sum() < 1.0


def test_objective_no_worse_than_clamped_reference():
    rng = np.random.default_rng(34)
    for _ in range(8):
        n = int(rng.integers(10, 50))
        geom = make_geom(n)
        w_r = 240
        lo, hi = 120.0, 880.0
        r = np.clip(500.0 + np.cumsum(rng.normal(0.0, 2.0, n)), lo, hi)
        pe = estimate(r)
        rho = rng.uniform(0.7, 1.0, n)
        zt = ZoomTargets(rho, np.zeros(n))
        op = OptParams(tau=10.0, pan_speed_max=8.0, delay=0)
        info = build_program(pe, [], zt, op, geom, w_r)
        sol = qp.solve(info.prog)
        x, z = info.split(sol.x)
        got = objective_value(info, op, x, z)
        baseline = objective_value(info, op, np.clip(r, lo, hi),
                                   np.clip(rho, 0.7, 1.0))
        assert got <= baseline + 1e-6 * (1.0 + abs(baseline))


def test_translation_equivariance():
    n = 50
    geom = make_geom(n, width=1400)
    rng = np.random.default_rng(35)
    r = np.clip(400.0 + np.cumsum(rng.normal(0.0, 3.0, n)), 200.0, 800.0)
    op = OptParams(tau=0.0, pan_speed_max=8.0, delay=0)
    zt = flat_zoom(n)
    a = optimize_trajectory(estimate(r), [], zt, op, geom, 300)
    b = optimize_trajectory(estimate(r + 150.0), [], zt, op, geom, 300)
    assert b.x_star - a.x_star == pytest.approx(np.full(n, 150.0), abs=1e-4)


def test_deadzone_objective_is_shift_invariant():
    n = 40
    geom = make_geom(n, width=1400)
    rng = np.random.default_rng(36)
    r = np.clip(400.0 + np.cumsum(rng.normal(0.0, 5.0, n)), 200.0, 800.0)
    op = OptParams(tau=20.0, pan_speed_max=8.0, delay=0)
    zt = flat_zoom(n)
    infos = []
    objs = []
    for shift in (0.0, 150.0):
        info = build_program(estimate(r + shift), [], zt, op, geom, 300)
        sol = qp.solve(info.prog)
        x, z = info.split(sol.x)
        infos.append(info)
        objs.append(objective_value(info, op, x, z))
    assert objs[1] == pytest.approx(objs[0], abs=1e-5, rel=1e-6)


def test_zero_weights_project_the_reference():
    n = 30
    geom = make_geom(n)
    rng = np.random.default_rng(37)
    r = rng.uniform(100.0, 900.0, n)
    # slow the reference so the velocity cap stays slack
    r = 120.0 + np.cumsum(np.clip(np.diff(r, prepend=r[0]), -5.0, 5.0))
    r = np.clip(r, 0.0, 999.0)
    rho = rng.uniform(0.6, 1.1, n)
    zt = ZoomTargets(np.clip(rho, 0.7, 1.0), np.zeros(n))
    op = OptParams(tau=0.0, pan_speed_max=8.0, delay=0,
                   lambda1=0.0, lambda2=0.0, lambda3=0.0)
    info = build_program(estimate(r), [], zt, op, geom, 240)
    # eps bounds the objective error; unit curvature turns 1e-10 of
    # objective into 1e-5 of coordinate error
    sol = qp.solve(info.prog, eps_abs=1e-10)
    assert sol.status == "solved"
    x, z = info.split(sol.x)
    want = np.clip(r, 120.0, 880.0)
    assert x == pytest.approx(want, abs=1e-4)
    assert z == pytest.approx(np.clip(rho, 0.7, 1.0), abs=1e-4)


def test_invalid_cut_frames_rejected():
    n = 20
    geom = make_geom(n)
    op = OptParams(tau=10.0, pan_speed_max=8.0, delay=0)
    with pytest.raises(ValidationError):
        build_program(estimate(np.full(n, 500.0), [1]), [], flat_zoom(n),
                      op, geom, 240)
    with pytest.raises(ValidationError):
        build_program(estimate(np.full(n, 500.0)), [n], flat_zoom(n),
                      op, geom, 240)


def test_oversized_window_rejected():
    n = 10
    geom = make_geom(n)
    op = OptParams(tau=10.0, pan_speed_max=8.0, delay=0)
    with pytest.raises(ValidationError):
        build_program(estimate(np.full(n, 500.0)), [], flat_zoom(n),
                      op, geom, 1001)


def test_param_validation():
    with pytest.raises(ValidationError):
        OptParams(tau=-1.0, pan_speed_max=8.0)
    with pytest.raises(ValidationError):
        OptParams(tau=1.0, pan_speed_max=0.0)
    with pytest.raises(ValidationError):
        OptParams(tau=1.0, pan_speed_max=8.0, lambda2=-5.0)
    with pytest.raises(ValidationError):
        OptParams(tau=1.0, pan_speed_max=8.0, z_min=0.0)
    with pytest.raises(ValidationError):
        OptParams(tau=1.0, pan_speed_max=8.0, delay=-1)


def test_zoom_weights_default_to_pan_weights():
    op = OptParams(tau=1.0, pan_speed_max=8.0, lambda1=10.0, lambda2=20.0,
                   lambda3=30.0)
    assert op.zoom_weights == (10.0, 20.0, 30.0)
    op2 = OptParams(tau=1.0, pan_speed_max=8.0, lambda1=10.0, lambda1z=7.0)
    assert op2.zoom_weights[0] == 7.0


def test_crop_rect_geometry():
    geom = Geometry(1000, 500, 30.0, 3)
    x = np.array([500.0, 130.0, 900.0])
    z = np.array([1.0, 0.8, 0.7])
    rects = crop_rects(x, z, geom, 240)
    # full zoom: full height, width = w_r, centered at x
    assert rects[0] == pytest.approx([380.0, 0.0, 240.0, 500.0])
    # zoomed: shrunk box, vertically centered
    assert rects[1] == pytest.approx([130.0 - 96.0, 50.0, 192.0, 400.0])
    # near the right edge the rect clamps inside the frame
    left, top, width, height = rects[2]
    assert left + width <= 1000.0 + 1e-9
    assert left >= 0.0
    assert width == pytest.approx(168.0)


def test_trajectory_invariants_on_random_instances():
    rng = np.random.default_rng(38)
    for _ in range(15):
        n = int(rng.integers(8, 40))
        width = int(rng.integers(400, 900))
        w_r = int(rng.integers(100, width // 2))
        geom = Geometry(width, 400, 25.0, n)
        lo, hi = w_r / 2.0, width - w_r / 2.0
        r = np.clip(rng.uniform(lo, hi)
                    + np.cumsum(rng.normal(0.0, 6.0, n)), lo, hi)
        cuts = sorted(set(int(c) for c in rng.integers(2, n, size=2)))[:1] \
            if n > 3 and rng.uniform() < 0.5 else []
        pe = estimate(r, cuts)
        zt = ZoomTargets(rng.uniform(0.7, 1.0, n), np.zeros(n))
        op = OptParams(tau=float(rng.uniform(0.0, 12.0)),
                       pan_speed_max=float(rng.uniform(3.0, 12.0)),
                       cut_padding=int(rng.integers(0, 4)),
                       delay=int(rng.integers(0, 4)))
        traj = optimize_trajectory(pe, [], zt, op, geom, w_r)
        assert traj.x_star.min() >= lo - 1e-6
        assert traj.x_star.max() <= hi + 1e-6
        assert traj.z.min() >= 0.7 - 1e-6
        assert traj.z.max() <= 1.0 + 1e-6
        steps = np.abs(np.diff(traj.x_star))
        for j in range(n - 1):
            if j + 2 not in traj.cuts_all:
                assert steps[j] <= op.pan_speed_max + 1e-6
        assert traj.cuts_all == sorted(set(cuts))


def test_solver_failure_carries_residuals(monkeypatch):
    n = 30
    geom = make_geom(n)
    pe = estimate(np.full(n, 500.0))
    op = OptParams(tau=10.0, pan_speed_max=8.0, delay=0)

    def give_up(prog, **kwargs):
        nv = prog.P.shape[0]
        return qp.Solution(np.zeros(nv), np.zeros(prog.A.shape[0]), 0.0,
                           1.25, 4.5, 7, "max-iters", None)

    monkeypatch.setattr(qp, "solve", give_up)
    with pytest.raises(SolverError) as exc:
        optimize_trajectory(pe, [], flat_zoom(n), op, geom, 240)
    assert exc.value.primal_residual == 1.25
    assert exc.value.dual_residual == 4.5
    assert "1.25" in str(exc.value)


def test_croppath_csv_round_trip():
    n = 12
    geom = make_geom(n)
    pe = estimate(np.full(n, 430.0), [6])
    op = OptParams(tau=10.0, pan_speed_max=8.0, delay=0)
    traj = optimize_trajectory(pe, [], flat_zoom(n), op, geom, 240)
    buf = io.StringIO()
    save_croppath_csv(traj, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "frame,x,z,left,top,width,height,is_cut"
    loaded = load_croppath_csv(io.StringIO(text))
    assert loaded.x_star == pytest.approx(traj.x_star, abs=5e-4)
    assert loaded.z == pytest.approx(traj.z, abs=5e-7)
    assert loaded.cuts_all == traj.cuts_all
    with pytest.raises(ValidationError):
        load_croppath_csv(io.StringIO("frame,x\n"))
