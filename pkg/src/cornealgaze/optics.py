"""Rig design arithmetic: resolution, camera coverage and thin-lens focus."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import DEFAULT_EYE

DEFAULT_FACE_FRACTION = 0.2
FACE_FRACTION_DISTANCE = 550.0  # mm between the two people for the default fraction


@dataclass(frozen=True)
class RigSpec:
    interpersonal_distance: float = 550.0
    camera_subject_distance: float = 500.0
    focal_length: float = 35.0
    pixel_pitch: float = 0.0025
    sensor_size: tuple = (2048, 2048)
    coverage_box: tuple = (150.0, 250.0)  # (vertical, horizontal) head-movement range, mm
    required_face_px: float = 45.0
    overlap: float = 0.0

    def __post_init__(self):
        for name in ("interpersonal_distance", "camera_subject_distance", "focal_length",
                     "pixel_pitch"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"rig.{name} must be positive, got {v!r}")
        if len(self.sensor_size) != 2 or min(self.sensor_size) <= 0:
            raise ConfigError("rig.sensor_size must be two positive pixel counts")
        if len(self.coverage_box) != 2 or min(self.coverage_box) <= 0:
            raise ConfigError("rig.coverage_box must be two positive lengths")
        if self.required_face_px < 0:
            raise ConfigError("rig.required_face_px must be non-negative")
        if not 0 <= self.overlap < 1:
            raise ConfigError("rig.overlap must lie in [0, 1)")
        if self.focal_length >= self.camera_subject_distance:
            raise ConfigError("focal length must be shorter than the subject distance")


@dataclass(frozen=True)
class ThinLens:
    """Newtonian thin lens: f^2 = s * S with both measured from the focal points."""

    focal_length: float
    subject_depth: float
    back_focal_distance: float

    @classmethod
    def focused_at(cls, f, depth):
        return cls(f, depth, back_focal_distance(f, depth))

    def consistent(self, rtol=1e-9):
        lhs = self.focal_length ** 2
        return abs(lhs - self.back_focal_distance * self.subject_depth) <= rtol * lhs


@dataclass(frozen=True)
class MotorMap:
    slope: float
    intercept: float
    rms_residual: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ConfigError("motor map coefficients must be finite")

    def __call__(self, s):
        return self.slope * s + self.intercept


def face_fraction_at(interpersonal_distance):
    """Share of the limbus diameter taken by the other person's face (small-angle scaling)."""
    if not interpersonal_distance > 0:
        raise DomainError("interpersonal distance must be positive")
    return DEFAULT_FACE_FRACTION * FACE_FRACTION_DISTANCE / interpersonal_distance


def corneal_resolution_requirement(rig, eye=DEFAULT_EYE, face_fraction=DEFAULT_FACE_FRACTION):
    """Pixels per cm needed on the eye so the reflected face reaches ``required_face_px``."""
    if not 0 < face_fraction <= 1:
        raise DomainError("face fraction must lie in (0, 1]")
    px_per_mm = rig.required_face_px / (eye.limbus_diameter * face_fraction)
    return px_per_mm * 10.0


def achieved_resolution(rig, distance=None):
    """Pixels per cm at the subject plane for the rig's lens and sensor."""
    d = rig.camera_subject_distance if distance is None else distance
    if math.isinf(d):
        return 0.0
    if not d > rig.focal_length:
        raise DomainError("subject must be farther than the focal length")
    magnification = rig.focal_length / (d - rig.focal_length)
    return magnification / rig.pixel_pitch * 10.0


def camera_footprint(rig):
    """(height, width) in mm covered by one camera at the subject plane."""
    scale = rig.pixel_pitch * (rig.camera_subject_distance - rig.focal_length) / rig.focal_length
    w_px, h_px = rig.sensor_size
    return h_px * scale, w_px * scale


def camera_count(rig):
    """Cameras needed to tile the coverage box: (total, (rows, cols), footprint)."""
    fh, fw = camera_footprint(rig)
    ch, cw = rig.coverage_box
    keep = 1.0 - rig.overlap
    rows = max(1, math.ceil(ch / (fh * keep) - 1e-12))
    cols = max(1, math.ceil(cw / (fw * keep) - 1e-12))
    return rows * cols, (rows, cols), (fh, fw)


def back_focal_distance(f, depth):
    if not (f > 0 and depth > 0):
        raise DomainError("focal length and subject depth must be positive")
    if math.isinf(depth):
        return 0.0
    return f * f / depth


def calibrate_motor_map(pairs, f=35.0):
    """Least-squares line from back focal distance to motor value.

    ``pairs`` holds (subject depth mm, motor value). Needs at least two
    distinct back focal distances.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ConfigError("motor map calibration needs at least two pairs")
    s = np.array([back_focal_distance(f, d) for d, _ in pairs])
    m = np.array([float(v) for _, v in pairs])
    if np.unique(s).size < 2:
        raise ConfigError("motor map calibration needs two distinct subject depths")
    a = np.column_stack([s, np.ones_like(s)])
    (slope, intercept), *_ = np.linalg.lstsq(a, m, rcond=None)
    rms = float(np.sqrt(np.mean((a @ [slope, intercept] - m) ** 2)))
    return MotorMap(float(slope), float(intercept), rms)


def motor_command(depth, f, motor_map):
    """Integer motor value focusing at ``depth`` (round half to even)."""
    if not depth > 0:
        raise DomainError("depth must be positive")
    return int(round(motor_map(back_focal_distance(f, depth))))


def resolution_sweep(rig, distances):
    """Rows of (distance mm, achieved px/cm) for plotting."""
    return [(float(d), achieved_resolution(rig, d)) for d in distances]
