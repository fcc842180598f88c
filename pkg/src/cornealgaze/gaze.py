"""Point of gaze from the gaze reflection point, and the kappa offset.

The optical axis recovered from the limbus is not the line of sight; the
visual axis differs by a small subject-specific rotation (kappa) that is
calibrated from a few fixations on known targets.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .detector import fit_limbus
from .errors import ConfigError, DomainError, GeometryError, NoEllipseFound, TrackingLost
from .geometry import (DEFAULT_EYE, Ellipse, EyePose, GazeEstimate, angle_between, grp_pixel,
                       pose_angles, project_limbus)
from .pose import AmbiguityPolicy, ellipse_to_pose, select_branch
from .tracker import (AMBIGUITY_FALLBACK, LOW_CONFIDENCE, TrackingParams, init_tracker,
                      track_frame)

KAPPA_LIMIT = math.radians(15.0)
NO_ELLIPSE = "no-ellipse"
TRACKING_LOST = "tracking-lost"

# distance from the eyeball's center of rotation to the corneal center (mm)
ROTATION_TO_CORNEA = 5.3


@dataclass(frozen=True)
class Kappa:
    """Horizontal and vertical offset of the visual axis, radians.

    Positive horizontal turns the line of sight toward +x, positive vertical
    turns it up (toward -y in image coordinates).
    """

    horizontal_offset: float = 0.0
    vertical_offset: float = 0.0

    def __post_init__(self):
        for name in ("horizontal_offset", "vertical_offset"):
            v = getattr(self, name)
            if not math.isfinite(v) or abs(v) > KAPPA_LIMIT + 1e-12:
                raise DomainError(f"kappa {name} must lie within +/-15 deg, got {math.degrees(v):.3f}")

    @classmethod
    def from_degrees(cls, h_deg, v_deg):
        return cls(math.radians(h_deg), math.radians(v_deg))

    @property
    def h_deg(self):
        return math.degrees(self.horizontal_offset)

    @property
    def v_deg(self):
        return math.degrees(self.vertical_offset)

    def rotvec(self):
        return np.array([-self.vertical_offset, -self.horizontal_offset, 0.0])

    def negated(self):
        return Kappa(-self.horizontal_offset, -self.vertical_offset)


ZERO_KAPPA = Kappa()


@dataclass(frozen=True, eq=False)
class FixationSample:
    """A measured eye pose while fixating ``target_position`` (camera frame, mm)."""

    pose: EyePose
    target_position: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target_position, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise DomainError("target position must be finite")
        # the subject faces the camera, so a visible target lies on the camera side of the eye
        if t[2] >= self.pose.corneal_center[2]:
            raise DomainError("target must lie between the eye and the camera side")
        object.__setattr__(self, "target_position", t)

    def target_direction(self, pose=None):
        c = (pose or self.pose).corneal_center
        d = self.target_position - c
        return d / np.linalg.norm(d)


def rotate_gaze(g, kappa):
    return Rotation.from_rotvec(kappa.rotvec()).apply(np.asarray(g, dtype=float))


def apply_kappa(pose, kappa):
    """Visual-axis pose: the gaze rotated by kappa, limbus center unchanged."""
    if kappa.horizontal_offset == 0 and kappa.vertical_offset == 0:
        return pose
    g = rotate_gaze(pose.gaze, kappa)
    g = g / np.linalg.norm(g)
    phi, tau = pose_angles(g)
    if not tau < math.pi / 2:
        raise DomainError("visual axis points away from the camera")
    return EyePose(pose.limbus_center, phi, tau, pose.eye)


def compute_grp(pose, cam, eye=DEFAULT_EYE, kappa=None):
    """GRP pixel of the (kappa-corrected) line of sight."""
    visual = apply_kappa(pose, kappa) if kappa is not None else pose
    return grp_pixel(visual, cam, eye)


def _angles(rotvecs, g, t):
    """(M, K) angles between each rotated axis and its target direction."""
    mats = Rotation.from_rotvec(rotvecs).as_matrix()
    r = np.einsum("mij,kj->mki", mats, g)
    cross = np.linalg.norm(np.cross(r, t[None, :, :]), axis=2)
    dot = np.einsum("mki,ki->mk", r, t)
    return np.arctan2(cross, dot)


def _mean_angle(rotvecs, g, t):
    return _angles(rotvecs, g, t).mean(axis=1)


def calibrate_kappa(samples, grid_step_deg=0.5):
    """Kappa aligning the corrected gaze with the eye-to-target directions.

    A grid over +/-15 deg scored by mean angle gives the start for a
    least-squares polish on the unit-vector residuals; the polish is kept
    unless its mean angle is worse than kappa = 0. Returns (kappa, residual
    mean angle in degrees).
    """
    if not samples:
        raise ConfigError("kappa calibration needs at least one fixation sample")
    g = np.array([s.pose.gaze for s in samples])
    t = np.array([s.target_direction() for s in samples])

    ax = np.radians(np.arange(-15.0, 15.0 + 1e-9, grid_step_deg))
    hh, vv = np.meshgrid(ax, ax, indexing="ij")
    grid = np.column_stack([hh.ravel(), vv.ravel()])
    cost = _mean_angle(_rotvecs(grid), g, t)
    start = grid[int(np.argmin(cost))]

    def resid(x):
        return (Rotation.from_rotvec(_rotvecs(x[None, :])[0]).apply(g) - t).ravel()

    lim = KAPPA_LIMIT
    res = least_squares(resid, start, bounds=([-lim, -lim], [lim, lim]), xtol=1e-15,
                        ftol=1e-15, gtol=1e-15, method="trf")
    x = np.clip(res.x, -lim, lim)
    candidates = np.array([x, start, [0.0, 0.0]])
    angles = _mean_angle(_rotvecs(candidates), g, t)
    # never report something worse than no correction at all
    pick = 0 if angles[0] <= angles[2] else int(np.argmin(angles))
    kappa = Kappa(float(candidates[pick][0]), float(candidates[pick][1]))
    return kappa, math.degrees(float(angles[pick]))


def _rotvecs(hv):
    hv = np.asarray(hv, dtype=float).reshape(-1, 2)
    return np.column_stack([-hv[:, 1], -hv[:, 0], np.zeros(len(hv))])


def gaze_error_deg(pose, target, kappa=ZERO_KAPPA):
    """Angle between the corrected line of sight and the direction to ``target``."""
    g = apply_kappa(pose, kappa).gaze
    return math.degrees(angle_between(g, np.asarray(target, dtype=float) - pose.corneal_center))


def fixate(target, rotation_center, kappa=ZERO_KAPPA, eye=DEFAULT_EYE, iterations=50):
    """True eye pose whose visual axis passes through ``target``.

    The eye rotates about a fixed center; the corneal center sits
    ``ROTATION_TO_CORNEA`` mm along the optical axis from it.
    """
    target = np.asarray(target, dtype=float)
    e = np.asarray(rotation_center, dtype=float)
    back = Rotation.from_rotvec(-kappa.rotvec())
    g = np.array([0.0, 0.0, -1.0])
    for _ in range(iterations):
        c = e + ROTATION_TO_CORNEA * g
        v = target - c
        g_new = back.apply(v / np.linalg.norm(v))
        if np.linalg.norm(g_new - g) < 1e-15:
            g = g_new
            break
        g = g_new
    phi, tau = pose_angles(g)
    c = e + ROTATION_TO_CORNEA * g
    return EyePose.from_corneal_center(c, phi, tau, eye)


def marker_board(depth_mm, cols=5, rows=3, spacing_mm=150.0, center=(0.0, 0.0)):
    """Grid of targets on the plane z = ``depth_mm`` (camera frame)."""
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing_mm + center[0]
    ys = (np.arange(rows) - (rows - 1) / 2.0) * spacing_mm + center[1]
    return [np.array([x, y, depth_mm]) for y in ys for x in xs]


def synthetic_fixations(targets, rotation_center, kappa, eye=DEFAULT_EYE):
    return [FixationSample(fixate(t, rotation_center, kappa, eye), t) for t in targets]


def perturb_ellipse(e, noise_px, rng):
    """Gaussian noise of ``noise_px`` on center and both axes."""
    if noise_px <= 0:
        return e
    dx, dy, da, db = rng.normal(0.0, noise_px, 4)
    big = max(e.r_max + da, 1e-6)
    small = min(max(e.r_min + db, 1e-6), big)
    return Ellipse(big, small, (e.x + dx, e.y + dy), e.phi)


def measure_pose(pose, cam, eye=DEFAULT_EYE, noise_px=0.0, rng=None):
    """Pose recovered from the (optionally noisy) projected limbus.

    The tilt branch nearest the truth is kept, so simulations measure the
    noise effect rather than ambiguity failures.
    """
    e = project_limbus(pose, cam, eye)
    if noise_px > 0:
        e = perturb_ellipse(e, noise_px, rng or np.random.default_rng(0))
    pair = ellipse_to_pose(e, cam, eye)
    return select_branch(pair, AmbiguityPolicy("continuity"), pose)[0]


def kappa_convergence_curve(true_kappa, fixation_pool, noise_px, trials, seed, cam,
                            eye=DEFAULT_EYE, max_points=None):
    """Held-out gaze error after calibrating on k random fixations, k = 1..K.

    ``fixation_pool`` holds true poses generated with ``true_kappa``. In each
    trial the pool is shuffled once and the first k samples calibrate, so the
    training sets are nested. Error is measured on the remaining samples with
    exact poses. Returns a list of (k, mean error in degrees).
    """
    pool = list(fixation_pool)
    kmax = min(10, len(pool) - 1) if max_points is None else int(max_points)
    if kmax > len(pool):
        raise ConfigError("fixation pool is smaller than the largest point count")
    if trials <= 0 or kmax <= 0:
        return []
    ss = np.random.SeedSequence(int(seed))
    sums = np.zeros(kmax)
    for child in ss.spawn(int(trials)):
        rng = np.random.default_rng(child)
        order = rng.permutation(len(pool))
        measured = [FixationSample(measure_pose(pool[i].pose, cam, eye, noise_px, rng),
                                   pool[i].target_position) for i in order]
        for k in range(1, kmax + 1):
            kappa, _ = calibrate_kappa(measured[:k])
            held = [pool[i] for i in order[k:]] or [pool[i] for i in order]
            sums[k - 1] += np.mean([gaze_error_deg(s.pose, s.target_position, kappa) for s in held])
    return [(k, float(sums[k - 1] / trials)) for k in range(1, kmax + 1)]


def pog_pipeline(image, state, depth_hint, cam, eye=DEFAULT_EYE, kappa=ZERO_KAPPA,
                 cfgs=TrackingParams(), seed=0, policy=AmbiguityPolicy()):
    """Detect or track the eye, apply kappa and locate the GRP.

    Returns (state, GazeEstimate). Without a tracker state the limbus is
    detected from scratch, which needs ``depth_hint``. Detection and
    tracking failures come back as flagged estimates with a None state.
    """
    flags = set()
    if state is None:
        if depth_hint is None or not depth_hint > 0:
            raise ConfigError("a depth hint is required to initialize tracking")
        try:
            scored = fit_limbus(image, depth_hint, cam, eye, cfgs.hough, seed)
        except NoEllipseFound:
            return None, GazeEstimate(flags=frozenset({LOW_CONFIDENCE, NO_ELLIPSE}))
        pose, reason = select_branch(ellipse_to_pose(scored.ellipse, cam, eye), policy)
        if reason == "fallback":
            flags.add(AMBIGUITY_FALLBACK)
        state = init_tracker(pose, cfgs.tracker.count, cfgs.noise, seed, eye)
        ellipse, confidence, score = scored.ellipse, scored.confidence, scored.score
        if confidence <= 0:
            flags.add(LOW_CONFIDENCE)
    else:
        try:
            state, est = track_frame(state, image, depth_hint, cam, eye, cfgs, seed)
        except TrackingLost:
            return None, GazeEstimate(flags=frozenset({LOW_CONFIDENCE, TRACKING_LOST}))
        pose, ellipse, confidence, score = est.pose, est.ellipse, est.confidence, est.score
        flags |= est.flags

    try:
        visual = apply_kappa(pose, kappa)
        grp = grp_pixel(visual, cam, eye)
    except (GeometryError, DomainError):
        flags.add(LOW_CONFIDENCE)
        return state, GazeEstimate(ellipse, pose, None, confidence, frozenset(flags), score)
    if not (0 <= grp.x <= cam.width - 1 and 0 <= grp.y <= cam.height - 1):
        flags.add(LOW_CONFIDENCE)
    return state, GazeEstimate(ellipse, visual, grp, confidence, frozenset(flags), score)
