"""Eye pose from a limbus ellipse, including the two-fold tilt ambiguity.

A circle seen under weak perspective gives tau = arccos(r_min / r_max), but
not the sign of the tilt: (phi, tau) and (phi + pi, tau) project to the same
ellipse. Both hypotheses are returned and a policy picks one.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import DEFAULT_EYE, EyePose, angle_between

POLICIES = ("hemisphere", "continuity", "forced_plus", "forced_minus")


@dataclass(frozen=True, eq=False)
class PoseHypothesisPair:
    pose_plus: EyePose
    pose_minus: EyePose
    selected: str = ""

    def branches(self):
        return self.pose_plus, self.pose_minus


@dataclass(frozen=True)
class AmbiguityPolicy:
    """How to choose between the two tilt branches.

    ``roi`` is the camera-frame point (mm) the subject is assumed to look
    toward for the hemisphere rule; the default is the camera itself.
    """

    mode: str = "hemisphere"
    roi: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mode not in POLICIES:
            raise ConfigError(f"pose.ambiguity must be one of {POLICIES}, got {self.mode!r}")


def ellipse_to_pose(e, cam, eye=DEFAULT_EYE):
    """Both eye poses consistent with ellipse ``e``.

    Depth is f * RL / r_max and the limbus center is back-projected through
    the ellipse center at that depth.
    """
    if not e.r_max > 0:
        raise DomainError("r_max must be positive")
    if e.r_min > e.r_max:
        raise DomainError("r_min must not exceed r_max")
    tau = math.acos(min(1.0, e.r_min / e.r_max))
    depth = cam.focal_px * eye.r_limbus / e.r_max
    lc = cam.backproject(e.x, e.y, depth)
    plus = EyePose(lc, e.phi, tau, eye)
    return PoseHypothesisPair(plus, plus.flipped())


def select_branch(pair, policy=AmbiguityPolicy(), previous=None):
    """Chosen pose and the reason: continuity, hemisphere, forced, or fallback."""
    plus, minus = pair.branches()
    if policy.mode == "forced_plus":
        return plus, "forced"
    if policy.mode == "forced_minus":
        return minus, "forced"
    if policy.mode == "continuity":
        if previous is not None:
            g_prev = previous.gaze
            a_plus = angle_between(plus.gaze, g_prev)
            a_minus = angle_between(minus.gaze, g_prev)
            return (plus if a_plus <= a_minus else minus), "continuity"
        pose, _ = _hemisphere(plus, minus, policy.roi)
        return pose, "fallback"
    pose, _ = _hemisphere(plus, minus, policy.roi)
    return pose, "hemisphere"


def _hemisphere(plus, minus, roi):
    roi = np.asarray(roi, dtype=float)
    to_plus = roi - plus.limbus_center
    to_minus = roi - minus.limbus_center
    s_plus = float(np.dot(plus.gaze, to_plus / np.linalg.norm(to_plus)))
    s_minus = float(np.dot(minus.gaze, to_minus / np.linalg.norm(to_minus)))
    # ties (frontal eyes, eyes on the ROI axis) go to the plus branch
    if s_minus > s_plus + 1e-12:
        return minus, s_minus
    return plus, s_plus


def resolve_ambiguity(pair, prior=AmbiguityPolicy(), previous=None):
    """Pick one branch of ``pair`` according to ``prior``.

    Continuity without a previous pose falls back to the hemisphere rule;
    use :func:`select_branch` to see when that happened.
    """
    return select_branch(pair, prior, previous)[0]
