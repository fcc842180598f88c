"""Random poses and rendered frames shared by the tests."""

import math

import numpy as np

from cornealgaze.geometry import EyePose, project_limbus


def random_pose(rng, tau_deg=(1.0, 40.0), depth=(300.0, 900.0), lateral_mm=20.0):
    tau = math.radians(rng.uniform(*tau_deg))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    z = rng.uniform(*depth)
    x, y = rng.uniform(-lateral_mm, lateral_mm, 2)
    return EyePose(np.array([x, y, z]), phi, tau)


def centered_pose(rng, cam, tau_deg=(0.0, 40.0), depth=(400.0, 800.0), offset_px=6.0):
    """Pose whose limbus projects within ``offset_px`` of the image center."""
    tau = math.radians(rng.uniform(*tau_deg))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    z = rng.uniform(*depth)
    dx, dy = rng.uniform(-offset_px, offset_px, 2)
    cx, cy = cam.principal_point
    c = cam.backproject(cx + dx, cy + dy, z)
    return EyePose(c, phi, tau)


def ellipse_of(pose, cam):
    return project_limbus(pose, cam, pose.eye)
