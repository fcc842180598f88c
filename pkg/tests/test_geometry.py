import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornealgaze.errors import ConfigError, DomainError, GeometryError
from cornealgaze.geometry import (DEFAULT_EYE, AnatomicalEye, CameraIntrinsics, Ellipse, EyePose,
                                  angle_between, gaze_direction, grp_offset_mm, grp_pixel,
                                  grp_raytrace_oracle, pose_angles, project_limbus, wrap_angle)
from cornealgaze.render import RenderStyle, render_ellipse, render_eye_image

taus = st.floats(0.0, math.radians(60.0))
phis = st.floats(-10.0, 10.0)


def test_gaze_direction_frontal_points_at_camera():
    assert np.allclose(gaze_direction(0.0, 0.0), [0.0, 0.0, -1.0])


def test_gaze_direction_examples():
    t = math.radians(30.0)
    assert np.allclose(gaze_direction(0.0, t), [0.0, -0.5, -math.cos(t)])
    assert np.allclose(gaze_direction(math.pi / 2, t), [0.5, 0.0, -math.cos(t)])


@given(phis, taus)
def test_gaze_direction_is_unit_and_faces_camera(phi, tau):
    g = gaze_direction(phi, tau)
    assert abs(np.linalg.norm(g) - 1.0) < 1e-12
    assert g[2] < 0


@given(st.floats(0.0, 2 * math.pi - 1e-9), st.floats(1e-3, math.radians(80.0)))
def test_pose_angles_inverts_gaze_direction(phi, tau):
    p, t = pose_angles(gaze_direction(phi, tau))
    assert t == pytest.approx(tau, abs=1e-12)
    assert abs(math.remainder(p - phi, 2 * math.pi)) < 1e-9


def test_tau_outside_domain_rejected():
    with pytest.raises(DomainError):
        gaze_direction(0.0, math.pi / 2)
    with pytest.raises(DomainError):
        EyePose(np.array([0.0, 0.0, 500.0]), 0.0, -0.1)


def test_pose_behind_camera_rejected():
    with pytest.raises(GeometryError):
        EyePose(np.array([0.0, 0.0, -5.0]), 0.0, 0.1)


@given(st.floats(-100.0, 100.0))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert 0.0 <= w < 2 * math.pi
    assert abs(math.remainder(w - a, 2 * math.pi)) < 1e-9


def test_default_eye_values_and_invariants():
    eye = DEFAULT_EYE
    assert (eye.r_corneal, eye.d_limbus_corneal, eye.r_limbus) == (7.7, 5.6, 5.6)
    assert eye.limbus_diameter == pytest.approx(11.2)
    assert eye.r_limbus < eye.r_corneal
    with pytest.raises(ConfigError):
        AnatomicalEye(r_corneal=5.0, r_limbus=5.6)
    with pytest.raises(ConfigError):
        AnatomicalEye(r_corneal=-1.0)


def test_corneal_center_behind_limbus_along_axis():
    pose = EyePose(np.array([1.0, 2.0, 500.0]), 0.3, 0.4)
    d = pose.limbus_center - pose.corneal_center
    assert np.linalg.norm(d) == pytest.approx(DEFAULT_EYE.d_limbus_corneal)
    assert angle_between(d, pose.gaze) < 1e-12
    assert pose.corneal_center[2] > pose.depth


def test_flipped_pose_has_same_tilt():
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 0.3, 0.4)
    f = pose.flipped()
    assert f.tau == pose.tau
    assert f.phi == pytest.approx(pose.phi + math.pi)
    assert f.flipped().phi == pytest.approx(pose.phi)


def test_project_limbus_frontal_is_circle(cam):
    e = project_limbus(EyePose(np.array([0.0, 0.0, 500.0]), 0.0, 0.0), cam)
    assert e.r_max == pytest.approx(14000 * 5.6 / 500)
    assert e.r_max == pytest.approx(156.8)
    assert e.r_min == pytest.approx(e.r_max)
    assert e.center == pytest.approx(cam.principal_point)


def test_project_limbus_tilt_shrinks_minor_axis(cam):
    e = project_limbus(EyePose(np.array([0.0, 0.0, 500.0]), 0.2, math.radians(25.0)), cam)
    assert e.r_min / e.r_max == pytest.approx(math.cos(math.radians(25.0)), rel=1e-12)
    assert e.phi == pytest.approx(0.2)


def test_project_limbus_depth_doubling_halves_size(cam):
    a = project_limbus(EyePose(np.array([0.0, 0.0, 400.0]), 0.0, 0.3), cam)
    b = project_limbus(EyePose(np.array([0.0, 0.0, 800.0]), 0.0, 0.3), cam)
    assert b.r_max == pytest.approx(a.r_max / 2)
    assert b.r_min == pytest.approx(a.r_min / 2)


@given(phis, taus, st.floats(200.0, 2000.0))
def test_projected_ellipse_invariants(phi, tau, z):
    cam = CameraIntrinsics.centered(480, 480, 14000.0)
    e = project_limbus(EyePose(np.array([0.0, 0.0, z]), phi, tau), cam)
    assert 0 < e.r_min <= e.r_max
    assert e.r_max == pytest.approx(cam.focal_px * 5.6 / z)


def test_grp_offset_values():
    assert grp_offset_mm(0.0) == 0.0
    assert grp_offset_mm(math.radians(30.0)) == pytest.approx(-0.8071, abs=1e-3)
    assert grp_offset_mm(math.radians(60.0)) == pytest.approx(-0.9997, abs=1e-3)


def test_grp_frontal_at_limbus_center(cam):
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 1.0, 0.0)
    g = grp_pixel(pose, cam)
    o = grp_raytrace_oracle(pose, cam)
    assert g.distance(cam.principal_point) < 1e-9
    assert o.distance(cam.principal_point) < 1e-9


def test_grp_antisymmetric_under_branch_flip(cam):
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 0.7, 0.3)
    c = np.array(cam.principal_point)
    a = np.array(tuple(grp_pixel(pose, cam))) - c
    b = np.array(tuple(grp_pixel(pose.flipped(), cam))) - c
    assert np.allclose(a, -b, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, math.radians(40.0)), st.floats(300.0, 900.0))
def test_grp_closed_form_agrees_with_oracle_on_axis(phi, tau, z):
    cam = CameraIntrinsics.centered(480, 480, 14000.0)
    pose = EyePose(np.array([0.0, 0.0, z]), phi, tau)
    tol = 0.005 * DEFAULT_EYE.r_corneal * cam.focal_px / z
    assert grp_pixel(pose, cam).distance(grp_raytrace_oracle(pose, cam)) <= tol


def test_camera_project_and_backproject(cam):
    p = cam.backproject(100.0, 300.0, 650.0)
    q = cam.project(p)
    assert (q.x, q.y) == pytest.approx((100.0, 300.0))
    with pytest.raises(GeometryError):
        cam.project((0.0, 0.0, -1.0))


def test_camera_validation():
    with pytest.raises(ConfigError):
        CameraIntrinsics.centered(480, 480, 0.0)
    with pytest.raises(ConfigError):
        CameraIntrinsics(1000.0, (600.0, 10.0), (480, 480))


def test_ellipse_validation():
    with pytest.raises(DomainError):
        Ellipse(10.0, 11.0, (0, 0))
    with pytest.raises(DomainError):
        Ellipse(10.0, 0.0, (0, 0))


def test_render_iris_darker_than_sclera(cam):
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 0.4, 0.3)
    img = render_eye_image(pose, cam)
    e = project_limbus(pose, cam)
    ys, xs = np.mgrid[0:cam.height, 0:cam.width]
    rho = e.normalized_rho(xs, ys)
    assert img.dtype == np.uint8 and img.shape == (480, 480)
    assert img[rho < 0.9].mean() < img[rho > 1.1].mean()


def test_render_noise_is_seeded(cam):
    pose = EyePose(np.array([0.0, 0.0, 500.0]), 0.4, 0.3)
    a = render_eye_image(pose, cam, style=RenderStyle(noise_sigma=8.0, seed=4))
    b = render_eye_image(pose, cam, style=RenderStyle(noise_sigma=8.0, seed=4))
    assert np.array_equal(a, b)


def test_render_zero_size_rejected():
    with pytest.raises(GeometryError):
        render_ellipse(Ellipse(5.0, 4.0, (10.0, 10.0)), 0, 20)


def test_render_ellipse_outside_image_rejected():
    with pytest.raises(GeometryError):
        render_ellipse(Ellipse(50.0, 40.0, (10.0, 10.0)), 40, 40)
