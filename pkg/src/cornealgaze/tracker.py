"""Particle-filter tracking of the 3D eye model across frames.

Each particle is a corneal center C plus rotation (phi, tau); its depth is
C_z. A particle is scored by projecting its limbus to an ellipse and
evaluating the region/edge score on the frame. The per-frame estimate is the
weighted mean pose, polished by a least-squares edge fit that is also fed
back into the particle set.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import HoughConfig, ScoringContext, detect_edges, refine_ellipse, refinement_ok
from .errors import ConfigError, GeometryError, TrackingLost
from .geometry import DEFAULT_EYE, EyePose, GazeEstimate, grp_pixel, pose_angles, project_limbus
from .pose import AmbiguityPolicy, ellipse_to_pose, select_branch

LOW_CONFIDENCE = "low-confidence"
AMBIGUITY_FALLBACK = "ambiguity-fallback"
_TAU_MAX = math.pi / 2 - 1e-6
_MIN_DEPTH = 1.0


@dataclass(frozen=True)
class MotionNoise:
    """Per-frame random-walk scales: mm for center and depth, radians for angles."""

    sigma_center: float = 0.5
    sigma_phi: float = math.radians(3.0)
    sigma_tau: float = math.radians(1.5)
    sigma_depth: float = 2.0

    def __post_init__(self):
        for k in ("sigma_center", "sigma_phi", "sigma_tau", "sigma_depth"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be non-negative")


@dataclass(frozen=True)
class TrackerConfig:
    """``temperature`` is in score units; ``None`` means (A + B) / 10."""

    count: int = 500
    temperature: float = None
    ess_ratio: float = 0.5
    lost_after: int = 10
    refine: bool = True

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError("pf.count must be at least 2")
        if self.temperature is not None and not self.temperature > 0:
            raise ConfigError("pf.temperature must be positive")
        if not 0 <= self.ess_ratio <= 1:
            raise ConfigError("pf.ess_ratio must lie in [0, 1]")
        if self.lost_after < 1:
            raise ConfigError("pf.lost_after must be at least 1")


@dataclass(frozen=True)
class Particle:
    corneal_center: tuple
    phi: float
    tau: float
    weight: float

    @property
    def depth(self):
        return self.corneal_center[2]


@dataclass(frozen=True, eq=False)
class TrackerState:
    centers: np.ndarray
    phis: np.ndarray
    taus: np.ndarray
    weights: np.ndarray
    frame_index: int
    last_estimate: EyePose
    ess: float
    lost_count: int = 0
    eye: object = field(default=DEFAULT_EYE, repr=False)

    @property
    def particle_count(self):
        return len(self.weights)

    @property
    def particles(self):
        return [Particle(tuple(c), float(p), float(t), float(w))
                for c, p, t, w in zip(self.centers, self.phis, self.taus, self.weights)]


def _gaze(phis, taus):
    st = np.sin(taus)
    return np.column_stack([st * np.sin(phis), -st * np.cos(phis), -np.cos(taus)])


def _fold(phis, taus):
    """Map tau < 0 to the equivalent (phi + pi, -tau) and keep tau below pi/2."""
    neg = taus < 0
    phis = np.where(neg, phis + math.pi, phis) % (2 * math.pi)
    taus = np.minimum(np.abs(taus), _TAU_MAX)
    return phis, taus


def init_tracker(pose, count=500, noise=MotionNoise(), seed=0, eye=None):
    """Particles drawn around ``pose`` with uniform weights."""
    if count < 2:
        raise ConfigError("particle count must be at least 2")
    eye = eye or pose.eye
    rng = np.random.default_rng(seed)
    c0 = pose.corneal_center
    centers = np.tile(c0, (count, 1)).astype(float)
    centers[:, :2] += rng.normal(0.0, 1.0, (count, 2)) * noise.sigma_center
    centers[:, 2] += rng.normal(0.0, 1.0, count) * noise.sigma_depth
    phis = pose.phi + rng.normal(0.0, 1.0, count) * noise.sigma_phi
    taus = pose.tau + rng.normal(0.0, 1.0, count) * noise.sigma_tau
    phis, taus = _fold(phis, taus)
    centers[:, 2] = np.maximum(centers[:, 2], _MIN_DEPTH)
    w = np.full(count, 1.0 / count)
    return TrackerState(centers, phis, taus, w, 0, pose, float(count), 0, eye)


def predict(state, noise=MotionNoise(), seed=0):
    """Independent Gaussian random walk on every particle parameter.

    Negative tilts are folded onto the other branch (phi + pi); depth stays positive.
    """
    rng = np.random.default_rng(seed)
    n = state.particle_count
    centers = state.centers.copy()
    centers[:, :2] += rng.normal(0.0, 1.0, (n, 2)) * noise.sigma_center
    centers[:, 2] += rng.normal(0.0, 1.0, n) * noise.sigma_depth
    centers[:, 2] = np.maximum(centers[:, 2], _MIN_DEPTH)
    phis = state.phis + rng.normal(0.0, 1.0, n) * noise.sigma_phi
    taus = state.taus + rng.normal(0.0, 1.0, n) * noise.sigma_tau
    phis, taus = _fold(phis, taus)
    if noise.sigma_phi == 0 and noise.sigma_tau == 0:
        phis, taus = state.phis.copy(), state.taus.copy()
    return replace(state, centers=centers, phis=phis, taus=taus)


def particle_ellipses(state, cam, eye=None):
    """(K, 5) ellipse rows for every particle and a visibility mask."""
    eye = eye or state.eye
    g = _gaze(state.phis, state.taus)
    limbus = state.centers + eye.d_limbus_corneal * g
    z = limbus[:, 2]
    ok = z > 1e-6
    zs = np.where(ok, z, 1.0)
    cx, cy = cam.principal_point
    r_max = cam.focal_px * eye.r_limbus / zs
    rows = np.column_stack([
        cam.focal_px * limbus[:, 0] / zs + cx,
        cam.focal_px * limbus[:, 1] / zs + cy,
        r_max,
        r_max * np.cos(state.taus),
        state.phis,
    ])
    w, h = cam.image_size
    hw = np.sqrt((rows[:, 2] * np.cos(rows[:, 4])) ** 2 + (rows[:, 3] * np.sin(rows[:, 4])) ** 2)
    hh = np.sqrt((rows[:, 2] * np.sin(rows[:, 4])) ** 2 + (rows[:, 3] * np.cos(rows[:, 4])) ** 2)
    ok &= (rows[:, 0] - hw >= 0) & (rows[:, 0] + hw <= w - 1)
    ok &= (rows[:, 1] - hh >= 0) & (rows[:, 1] + hh <= h - 1)
    return rows, ok


def _normalized_weights(scores, temperature):
    scores = np.where(np.isfinite(scores), scores, 0.0)
    top = float(scores.max()) if len(scores) else 0.0
    if top <= 0:
        return np.full(len(scores), 1.0 / len(scores)), False
    if math.isinf(temperature):
        return np.full(len(scores), 1.0 / len(scores)), True
    w = np.exp((scores - top) / temperature)
    return w / w.sum(), True


def default_temperature(hough_cfg):
    return max((hough_cfg.A + hough_cfg.B) / 10.0, 1e-12)


def weight_particles(state, image, cam, eye=None, hough_cfg=HoughConfig(), temperature=None,
                     context=None, threshold=None):
    """Weight particles by exp(score / temperature).

    ``temperature`` defaults to (A + B) / 10 in score units.
    Returns (state, scores, informative). When no particle scores above zero
    the weights are uniform and ``informative`` is False.
    """
    eye = eye or state.eye
    ctx = context or ScoringContext(image, detect_edges(image, hough_cfg.edge_threshold), hough_cfg)
    if threshold is None:
        threshold = _threshold(ctx, state, cam, eye)
    rows, ok = particle_ellipses(state, cam, eye)
    scores = np.zeros(len(rows))
    if ok.any():
        scores[ok] = ctx.scores(rows[ok], threshold)
    if temperature is None:
        temperature = default_temperature(hough_cfg)
    w, informative = _normalized_weights(scores, temperature)
    ess = 1.0 / float(np.sum(w * w))
    ess = min(max(ess, 1.0), float(len(w)))
    return replace(state, weights=w, ess=ess), scores, informative


def _threshold(ctx, state, cam, eye):
    try:
        e = project_limbus(state.last_estimate, cam, eye)
    except GeometryError:
        return ctx.threshold_for_image()
    return ctx.threshold_for(e)


def resample(state, seed=0, ess_ratio=0.5):
    """Systematic resampling when ESS drops below ``ess_ratio`` * N."""
    n = state.particle_count
    if state.ess >= ess_ratio * n:
        return state
    rng = np.random.default_rng(seed)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(state.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, positions, side="right")
    idx = np.minimum(idx, n - 1)
    return replace(state, centers=state.centers[idx].copy(), phis=state.phis[idx].copy(),
                   taus=state.taus[idx].copy(), weights=np.full(n, 1.0 / n), ess=float(n))


def estimate_pose(state, reference=None):
    """Weighted mean pose; each particle first takes the tilt branch nearest ``reference``."""
    eye = state.eye
    ref = reference if reference is not None else state.last_estimate
    g = _gaze(state.phis, state.taus)
    if ref is not None:
        g_flip = _gaze(state.phis + math.pi, state.taus)
        g_ref = ref.gaze
        use_flip = g_flip @ g_ref > g @ g_ref
        g = np.where(use_flip[:, None], g_flip, g)
    w = state.weights
    g_mean = w @ g
    norm = np.linalg.norm(g_mean)
    if norm < 1e-12 or g_mean[2] >= 0:
        g_mean = ref.gaze if ref is not None else np.array([0.0, 0.0, -1.0])
    else:
        g_mean = g_mean / norm
    c_mean = w @ state.centers
    phi, tau = pose_angles(g_mean)
    return EyePose.from_corneal_center(c_mean, phi, tau, eye)


@dataclass(frozen=True)
class TrackingParams:
    hough: HoughConfig = HoughConfig()
    noise: MotionNoise = MotionNoise()
    tracker: TrackerConfig = TrackerConfig()


def track_frame(state, image, depth_hint, cam, eye=None, cfgs=TrackingParams(), seed=0):
    """One filter step: predict, weight, estimate, refine, resample.

    ``depth_hint`` (mm, optional) shifts the particle depths so the cloud is
    centered on an external depth measurement. Raises TrackingLost once
    ``lost_after`` consecutive frames carried no usable signal.
    """
    eye = eye or state.eye
    frame = state.frame_index + 1
    ss = np.random.SeedSequence([int(seed), frame])
    s_pred, s_res = (int(x) for x in ss.generate_state(2))

    st = predict(state, cfgs.noise, s_pred)
    if depth_hint is not None and depth_hint > 0:
        g = _gaze(st.phis, st.taus)
        lz = st.centers[:, 2] + eye.d_limbus_corneal * g[:, 2]
        shift = float(depth_hint) - float(np.mean(lz))
        centers = st.centers.copy()
        centers[:, 2] = np.maximum(centers[:, 2] + shift, _MIN_DEPTH)
        st = replace(st, centers=centers)

    edges = detect_edges(image, cfgs.hough.edge_threshold)
    ctx = ScoringContext(image, edges, cfgs.hough)
    threshold = _threshold(ctx, state, cam, eye)
    st, scores, informative = weight_particles(st, image, cam, eye, cfgs.hough,
                                               _temp(cfgs), ctx, threshold)
    flags = set()
    lost = 0 if informative else state.lost_count + 1
    if not informative:
        flags.add(LOW_CONFIDENCE)
        if lost >= cfgs.tracker.lost_after:
            raise TrackingLost(f"no usable signal for {lost} consecutive frames")

    est = estimate_pose(st, state.last_estimate)
    if informative and cfgs.tracker.refine:
        st, est = _refine(st, est, scores, ctx, threshold, cam, eye, edges, cfgs)

    st = replace(st, frame_index=frame, last_estimate=est, lost_count=lost)
    st = resample(st, s_res, cfgs.tracker.ess_ratio)

    try:
        ellipse = project_limbus(est, cam, eye)
        score = float(ctx.scores([ellipse], threshold)[0])
        conf = ctx.confidence(ellipse, threshold) if informative else 0.0
        grp = grp_pixel(est, cam, eye)
    except GeometryError:
        return st, GazeEstimate(None, est, None, 0.0, frozenset(flags | {LOW_CONFIDENCE}), 0.0)
    return st, GazeEstimate(ellipse, est, grp, conf, frozenset(flags), score)


def _temp(cfgs):
    t = cfgs.tracker.temperature
    return default_temperature(cfgs.hough) if t is None else t


def _refine(st, est, scores, ctx, threshold, cam, eye, edges, cfgs):
    try:
        start = project_limbus(est, cam, eye)
    except GeometryError:
        return st, est
    refined = refine_ellipse(start, edges)
    if refined is None or not refined.inside_image(cam.width, cam.height):
        return st, est
    if not refinement_ok(ctx, start, refined, threshold):
        return st, est
    r_score = float(ctx.scores([refined], threshold)[0])
    pose, _ = select_branch(ellipse_to_pose(refined, cam, eye), AmbiguityPolicy("continuity"), est)

    # the refined pose replaces the weakest particle
    worst = int(np.argmin(st.weights))
    centers, phis, taus = st.centers.copy(), st.phis.copy(), st.taus.copy()
    centers[worst] = pose.corneal_center
    phis[worst], taus[worst] = pose.phi, pose.tau
    all_scores = scores.copy()
    all_scores[worst] = r_score
    w, _ = _normalized_weights(all_scores, _temp(cfgs))
    ess = min(max(1.0 / float(np.sum(w * w)), 1.0), float(len(w)))
    return replace(st, centers=centers, phis=phis, taus=taus, weights=w, ess=ess), pose
