import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornealgaze.detector import (HoughConfig, ScoringContext, center_candidates, detect_edges,
                                  fit_limbus, hough_candidates, radius_candidates, score_candidate)
from cornealgaze.errors import ConfigError, DomainError, NoEllipseFound
from cornealgaze.geometry import CameraIntrinsics, Ellipse, EyePose, ImagePoint, project_limbus
from cornealgaze.render import RenderStyle, render_ellipse, render_eye_image

from synth import centered_pose


def _truth_image(cam, sigma=0.0, seed=0, tau=0.35, phi=0.6):
    pose = EyePose(np.array([0.2, -0.1, 520.0]), phi, tau)
    img = render_eye_image(pose, cam, style=RenderStyle(noise_sigma=sigma, seed=seed))
    return pose, project_limbus(pose, cam), img


def test_radius_candidates_are_unit_spaced_around_expected(cam):
    r = radius_candidates(500.0, cam, cfg=HoughConfig(m=3))
    assert len(r) == 6
    assert np.allclose(np.diff(r), 1.0)
    assert r[0] == pytest.approx(156.8 - 2)
    assert r[-1] == pytest.approx(156.8 + 3)


def test_radius_candidates_m1(cam):
    assert len(radius_candidates(500.0, cam, cfg=HoughConfig(m=1))) == 2


def test_radius_candidates_reject_bad_depth(cam):
    with pytest.raises(DomainError):
        radius_candidates(0.0, cam)


def test_hough_config_validation():
    with pytest.raises(ConfigError):
        HoughConfig(m=0)
    with pytest.raises(ConfigError):
        HoughConfig(A=-1.0)
    with pytest.raises(ConfigError):
        HoughConfig(edge_term="ring")


def test_center_candidates_single():
    c = center_candidates((10.0, 20.0), HoughConfig(n=1))
    assert c == [ImagePoint(10.0, 20.0)]


def test_center_candidates_deterministic_and_bounded():
    cfg = HoughConfig(n=12, center_jitter_px=10.0)
    a = center_candidates((100.0, 100.0), cfg, 7)
    b = center_candidates((100.0, 100.0), cfg, 7)
    assert a == b and len(a) == 12
    assert a[0] == ImagePoint(100.0, 100.0)
    assert all(p.distance((100.0, 100.0)) <= 10.0 for p in a)


def test_edges_uniform_image_empty():
    assert len(detect_edges(np.full((50, 50), 128, np.uint8))) == 0


def test_edges_infinite_threshold_empty(cam):
    _, _, img = _truth_image(cam)
    assert len(detect_edges(img, math.inf)) == 0


def test_edges_lie_on_disk_contour():
    e = Ellipse(30.0, 30.0, (50.0, 50.0))
    img = render_ellipse(e, 101, 101)
    edges = detect_edges(img, 20.0)
    rho = e.normalized_rho(edges.points[:, 0], edges.points[:, 1])
    assert len(edges) > 100
    assert np.max(np.abs(rho - 1.0) * 30.0) <= 1.5


def test_hough_top_bin_near_truth(cam):
    _, truth, img = _truth_image(cam)
    edges = detect_edges(img)
    radii = radius_candidates(520.0, cam)
    centers = center_candidates(cam.principal_point, HoughConfig(), 0)
    best = hough_candidates(edges, radii, centers)[0]
    assert best.r_max == pytest.approx(truth.r_max, abs=1.0)
    assert math.hypot(best.x - truth.x, best.y - truth.y) < 10.0


def test_hough_blank_image_raises(cam):
    img = np.full((cam.height, cam.width), 200, np.uint8)
    with pytest.raises(NoEllipseFound):
        fit_limbus(img, 500.0, cam)


def test_hough_finds_two_disjoint_ellipses():
    a = Ellipse(20.0, 20.0, (50.0, 50.0))
    b = Ellipse(20.0, 20.0, (150.0, 50.0))
    img = np.minimum(render_ellipse(a, 200, 100), render_ellipse(b, 200, 100))
    edges = detect_edges(img)
    cands = hough_candidates(edges, np.arange(17.0, 24.0), [(50.0, 50.0), (150.0, 50.0)])
    xs = {round(c.x) for c in cands}
    assert {50, 150} <= xs


def test_score_prefers_truth_over_shift(cam):
    _, truth, img = _truth_image(cam)
    edges = detect_edges(img)
    shifted = Ellipse(truth.r_max, truth.r_min, (truth.x + 5, truth.y), truth.phi)
    assert score_candidate(img, shifted, edges) < score_candidate(img, truth, edges)


def test_score_zero_weights(cam):
    _, truth, img = _truth_image(cam)
    assert score_candidate(img, truth, detect_edges(img), HoughConfig(A=0.0, B=0.0)) == 0.0


def test_score_bright_uniform_is_zero():
    img = np.full((100, 100), 250, np.uint8)
    e = Ellipse(20.0, 15.0, (50.0, 50.0))
    assert score_candidate(img, e, detect_edges(img), HoughConfig(N=128)) == 0.0


def test_score_decreases_with_offset(cam):
    _, truth, img = _truth_image(cam)
    edges = detect_edges(img)
    ctx = ScoringContext(img, edges)
    th = ctx.threshold_for(truth)
    shifted = [Ellipse(truth.r_max, truth.r_min, (truth.x + k, truth.y), truth.phi)
               for k in range(0, 6)]
    s = ctx.scores(shifted, th)
    assert np.all(np.diff(s) < 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_score_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (240, 240)).astype(np.uint8)
    e = Ellipse(rng.uniform(20, 60), 15.0, tuple(rng.uniform(100, 140, 2)), rng.uniform(0, 3))
    assert score_candidate(img, e, detect_edges(img)) >= 0.0


def test_fit_limbus_deterministic(cam):
    _, _, img = _truth_image(cam, sigma=8.0, seed=2)
    a = fit_limbus(img, 520.0, cam)
    b = fit_limbus(img, 520.0, cam)
    assert a == b


def test_fit_limbus_noiseless_accuracy(cam):
    _, truth, img = _truth_image(cam)
    fit = fit_limbus(img, 520.0, cam)
    assert math.hypot(fit.ellipse.x - truth.x, fit.ellipse.y - truth.y) < 1.0
    assert abs(fit.ellipse.r_max - truth.r_max) / truth.r_max < 0.02
    assert 0.9 < fit.confidence <= 1.0


def test_fit_limbus_without_refinement_stays_in_radius_set(cam):
    _, _, img = _truth_image(cam, sigma=4.0, seed=1)
    cfg = HoughConfig(refine=False)
    fit = fit_limbus(img, 520.0, cam, cfg=cfg)
    radii = radius_candidates(520.0, cam, cfg=cfg)
    assert radii[0] <= fit.ellipse.r_max <= radii[-1]


def test_fit_limbus_bright_iris(cam):
    pose = EyePose(np.array([0.0, 0.0, 520.0]), 0.3, 0.3)
    truth = project_limbus(pose, cam)
    img = render_eye_image(pose, cam, style=RenderStyle(iris=210.0, sclera=60.0))
    fit = fit_limbus(img, 520.0, cam, cfg=HoughConfig(iris_dark=False))
    assert math.hypot(fit.ellipse.x - truth.x, fit.ellipse.y - truth.y) < 1.0


def test_fit_limbus_center_edge_term_runs(cam):
    _, truth, img = _truth_image(cam)
    fit = fit_limbus(img, 520.0, cam, cfg=HoughConfig(edge_term="center"))
    assert math.hypot(fit.ellipse.x - truth.x, fit.ellipse.y - truth.y) < 2.0


def test_fit_limbus_with_eyelid(cam):
    pose = EyePose(np.array([0.0, 0.0, 520.0]), 0.3, 0.3)
    truth = project_limbus(pose, cam)
    img = render_eye_image(pose, cam, style=RenderStyle(eyelid=0.2, noise_sigma=4.0, seed=9))
    fit = fit_limbus(img, 520.0, cam)
    assert math.hypot(fit.ellipse.x - truth.x, fit.ellipse.y - truth.y) < 3.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_fit_limbus_random_centered_poses(seed):
    cam = CameraIntrinsics.centered(480, 480, 14000.0)
    pose = centered_pose(np.random.default_rng(seed), cam)
    truth = project_limbus(pose, cam)
    img = render_eye_image(pose, cam)
    fit = fit_limbus(img, pose.depth, cam)
    assert math.hypot(fit.ellipse.x - truth.x, fit.ellipse.y - truth.y) <= 1.0
