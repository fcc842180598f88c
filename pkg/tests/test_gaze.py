import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornealgaze import AmbiguityPolicy
from cornealgaze.config import read_kappa_profile, write_kappa_profile
from cornealgaze.errors import ConfigError, DomainError
from cornealgaze.gaze import (NO_ELLIPSE, ZERO_KAPPA, FixationSample, Kappa, apply_kappa,
                              calibrate_kappa, compute_grp, fixate, gaze_error_deg,
                              kappa_convergence_curve, marker_board, measure_pose, pog_pipeline,
                              rotate_gaze,
                              synthetic_fixations)
from cornealgaze.geometry import EyePose, angle_between, grp_pixel
from cornealgaze.render import RenderStyle, blank_image, render_eye_image
from cornealgaze.tracker import LOW_CONFIDENCE, TrackerConfig, TrackingParams

kappas = st.floats(-15.0, 15.0)
POSE = EyePose(np.array([0.3, -0.2, 500.0]), 0.8, math.radians(15.0))
EYE_CENTER = np.array([0.0, 0.0, 510.0])


def test_zero_kappa_is_identity():
    assert apply_kappa(POSE, ZERO_KAPPA) is POSE


def test_kappa_range_enforced():
    with pytest.raises(DomainError):
        Kappa.from_degrees(16.0, 0.0)
    Kappa.from_degrees(15.0, -15.0)


@given(kappas, kappas)
def test_kappa_inverse_is_exact(h, v):
    k = Kappa.from_degrees(h, v)
    g = rotate_gaze(rotate_gaze(POSE.gaze, k), k.negated())
    assert np.allclose(g, POSE.gaze, atol=1e-12)


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_small_kappa_angle_on_frontal_axis(h, v):
    k = Kappa.from_degrees(h, v)
    g = np.array([0.0, 0.0, -1.0])
    got = math.degrees(angle_between(rotate_gaze(g, k), g))
    assert got == pytest.approx(math.hypot(h, v), abs=0.01)


@given(kappas, kappas)
def test_corrected_gaze_is_unit(h, v):
    g = rotate_gaze(POSE.gaze, Kappa.from_degrees(h, v))
    assert abs(np.linalg.norm(g) - 1.0) < 1e-12


def test_kappa_sign_convention():
    frontal = EyePose(np.array([0.0, 0.0, 500.0]), 0.0, 0.0)
    g = apply_kappa(frontal, Kappa.from_degrees(5.0, 0.0)).gaze
    assert g[0] > 0
    g = apply_kappa(frontal, Kappa.from_degrees(0.0, 5.0)).gaze
    assert g[1] < 0


def test_grp_frontal_no_kappa_at_limbus_center(cam):
    frontal = EyePose(np.array([0.0, 0.0, 500.0]), 0.0, 0.0)
    assert compute_grp(frontal, cam).distance(cam.principal_point) < 1e-9


def test_kappa_moves_grp(cam):
    frontal = EyePose(np.array([0.0, 0.0, 500.0]), 0.0, 0.0)
    a = compute_grp(frontal, cam)
    b = compute_grp(frontal, cam, kappa=Kappa.from_degrees(5.0, 0.0))
    assert a.distance(b) > 2.0


def test_grp_continuous_in_tilt(cam):
    prev = None
    for t in np.radians(np.arange(0.0, 40.0, 0.1)):
        p = compute_grp(EyePose(np.array([0.0, 0.0, 500.0]), 0.4, float(t)), cam)
        if prev is not None:
            assert p.distance(prev) < 0.5
        prev = p


def test_fixate_aims_visual_axis_at_target():
    kappa = Kappa.from_degrees(4.0, -1.5)
    target = np.array([120.0, -40.0, -300.0])
    pose = fixate(target, EYE_CENTER, kappa)
    assert gaze_error_deg(pose, target, kappa) < 1e-9


def test_fixation_target_must_be_on_camera_side():
    with pytest.raises(DomainError):
        FixationSample(POSE, np.array([0.0, 0.0, 900.0]))


def _pool(kappa, depth=-300.0):
    return synthetic_fixations(marker_board(depth), EYE_CENTER, kappa)


def test_marker_board_layout():
    board = marker_board(-300.0)
    assert len(board) == 15
    assert np.allclose(np.mean(board, axis=0), [0.0, 0.0, -300.0])


def test_calibrate_zero_kappa():
    k, res = calibrate_kappa(_pool(ZERO_KAPPA))
    assert abs(k.h_deg) < 1e-6 and abs(k.v_deg) < 1e-6
    assert res < 1e-6


def test_calibrate_recovers_kappa():
    k, res = calibrate_kappa(_pool(Kappa.from_degrees(3.0, -2.0)))
    assert k.h_deg == pytest.approx(3.0, abs=0.05)
    assert k.v_deg == pytest.approx(-2.0, abs=0.05)
    assert res < 0.05


def test_calibrate_single_sample_fits_exactly():
    k, res = calibrate_kappa(_pool(Kappa.from_degrees(3.0, -2.0))[:1])
    assert res < 1e-6


def test_calibrate_empty_rejected():
    with pytest.raises(ConfigError):
        calibrate_kappa([])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_calibration_never_worse_than_no_correction(seed):
    rng = np.random.default_rng(seed)
    pool = _pool(Kappa.from_degrees(*rng.uniform(-8, 8, 2)))
    measured = [FixationSample(s.pose.with_angles(s.pose.phi + rng.normal(0, 0.05),
                                                  abs(s.pose.tau + rng.normal(0, 0.02))),
                               s.target_position) for s in pool[:4]]
    _, res = calibrate_kappa(measured)
    zero = np.mean([gaze_error_deg(s.pose, s.target_position) for s in measured])
    assert res <= zero + 1e-9


def test_convergence_curve_zero_trials(cam):
    assert kappa_convergence_curve(ZERO_KAPPA, _pool(ZERO_KAPPA), 0.5, 0, 1, cam) == []


def test_convergence_curve_deterministic(cam):
    pool = _pool(Kappa.from_degrees(2.0, 1.0))
    a = kappa_convergence_curve(Kappa.from_degrees(2.0, 1.0), pool, 0.5, 3, 5, cam, max_points=4)
    b = kappa_convergence_curve(Kappa.from_degrees(2.0, 1.0), pool, 0.5, 3, 5, cam, max_points=4)
    assert a == b and [k for k, _ in a] == [1, 2, 3, 4]


def test_pog_pipeline_noiseless(cam):
    kappa = Kappa.from_degrees(2.0, -1.0)
    img = render_eye_image(POSE, cam)
    params = TrackingParams(tracker=TrackerConfig(count=100))
    state, est = pog_pipeline(img, None, 500.0, cam, kappa=kappa, cfgs=params,
                              policy=AmbiguityPolicy("forced_plus"))
    truth = grp_pixel(apply_kappa(POSE, kappa), cam)
    assert state is not None
    assert est.grp.distance(truth) < 1.0


def test_pog_pipeline_blank_frame(cam):
    state, est = pog_pipeline(blank_image(cam), None, 500.0, cam)
    assert state is None and est.grp is None
    assert {NO_ELLIPSE, LOW_CONFIDENCE} <= est.flags


def test_pog_pipeline_needs_depth(cam):
    with pytest.raises(ConfigError):
        pog_pipeline(blank_image(cam), None, None, cam)


def test_pog_pipeline_tracks_noisy_frame(cam):
    params = TrackingParams(tracker=TrackerConfig(count=100))
    img = render_eye_image(POSE, cam, style=RenderStyle(noise_sigma=4.0, seed=2))
    state, _ = pog_pipeline(img, None, 500.0, cam, cfgs=params, policy=AmbiguityPolicy("forced_plus"))
    state, est = pog_pipeline(img, state, None, cam, cfgs=params)
    assert math.degrees(angle_between(est.pose.gaze, POSE.gaze)) < 2.0


@given(kappas, kappas)
def test_kappa_profile_round_trip(tmp_path_factory, h, v):
    path = tmp_path_factory.mktemp("k") / "kappa.txt"
    k = Kappa.from_degrees(h, v)
    write_kappa_profile(path, k)
    got = read_kappa_profile(path)
    assert got.horizontal_offset == pytest.approx(k.horizontal_offset, abs=1e-15)
    assert got.vertical_offset == pytest.approx(k.vertical_offset, abs=1e-15)


def test_larger_kappa_shifts_grp_further(cam):
    frontal = EyePose(np.array([0.0, 0.0, 500.0]), 0.0, 0.0)
    base = compute_grp(frontal, cam)
    small = compute_grp(frontal, cam, kappa=Kappa.from_degrees(2.0, 0.0))
    large = compute_grp(frontal, cam, kappa=Kappa.from_degrees(5.0, 0.0))
    assert abs(large.x - base.x) > abs(small.x - base.x) > 0


def test_ellipse_noise_gives_small_gaze_error(cam):
    # design geometry: tau 20 deg at 500 mm; mean over noise draws
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 0.0, math.radians(20.0))
    rng = np.random.default_rng(12)
    errs = [math.degrees(angle_between(measure_pose(pose, cam, noise_px=0.5, rng=rng).gaze,
                                       pose.gaze)) for _ in range(500)]
    assert np.mean(errs) < 2.0
