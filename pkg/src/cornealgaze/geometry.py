"""Eye model, camera model and the forward geometry of corneal imaging.

Frame: camera center at the origin, +z into the scene, image x to the right
and y down. Pixel (row i, col j) has its center at (x=j, y=i). Lengths are in
millimetres, image quantities in pixels, angles in radians.

An eye pose is the limbus center L plus two angles: ``phi``, the in-image
rotation, and ``tau``, the tilt of the limbus plane. The optical axis is

    g = (sin tau sin phi, -sin tau cos phi, -cos tau)

so a frontal eye looks straight back at the camera. The limbus projects to an
ellipse whose major axis points along (cos phi, sin phi) and whose minor axis
(the projected tilt direction) lies along (sin phi, -cos phi).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, GeometryError, NumericError

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle into [0, 2*pi)."""
    out = math.fmod(a, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:  # fmod of a tiny negative number
        out = 0.0
    return out


def angle_between(u, v):
    """Unsigned angle between two 3-vectors, stable near 0 and pi."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))


@dataclass(frozen=True)
class AnatomicalEye:
    """Corneal sphere radius, limbus-to-corneal-center distance, limbus radius (mm)."""

    r_corneal: float = 7.7
    d_limbus_corneal: float = 5.6
    r_limbus: float = 5.6

    def __post_init__(self):
        for name in ("r_corneal", "d_limbus_corneal", "r_limbus"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.r_limbus >= self.r_corneal:
            raise ConfigError("limbus radius must be smaller than the corneal radius")

    @property
    def limbus_diameter(self):
        return 2.0 * self.r_limbus

    @property
    def cap_half_angle(self):
        """Angle from the optical axis to the edge of the corneal cap."""
        return math.acos(min(1.0, self.d_limbus_corneal / self.r_corneal))


DEFAULT_EYE = AnatomicalEye()


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera in pixel units.

    ``image_size`` is (width, height). ``pixel_pitch`` (mm/px) is only needed to
    convert a focal length given in mm.
    """

    focal_px: float
    principal_point: tuple
    image_size: tuple
    pixel_pitch: float = None

    def __post_init__(self):
        w, h = self.image_size
        if not (self.focal_px > 0 and math.isfinite(self.focal_px)):
            raise ConfigError(f"focal_px must be positive, got {self.focal_px!r}")
        if not (w > 0 and h > 0):
            raise ConfigError(f"image size must be positive, got {self.image_size!r}")
        cx, cy = self.principal_point
        if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
            raise ConfigError("principal point must lie inside the image")
        object.__setattr__(self, "principal_point", (float(cx), float(cy)))
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @classmethod
    def centered(cls, width, height, focal_px, pixel_pitch=None):
        return cls(focal_px, ((width - 1) / 2.0, (height - 1) / 2.0), (width, height), pixel_pitch)

    @classmethod
    def from_focal_mm(cls, focal_mm, pixel_pitch, width, height):
        return cls.centered(width, height, focal_mm / pixel_pitch, pixel_pitch)

    @property
    def width(self):
        return self.image_size[0]

    @property
    def height(self):
        return self.image_size[1]

    def project(self, point):
        """Full perspective projection of a camera-frame point to pixels."""
        x, y, z = (float(c) for c in point)
        if z <= 0:
            raise GeometryError("point is behind the camera")
        cx, cy = self.principal_point
        return ImagePoint(self.focal_px * x / z + cx, self.focal_px * y / z + cy)

    def ray(self, x, y):
        """Unit viewing ray through pixel (x, y)."""
        cx, cy = self.principal_point
        d = np.array([(x - cx) / self.focal_px, (y - cy) / self.focal_px, 1.0])
        return d / np.linalg.norm(d)

    def backproject(self, x, y, depth):
        """Point at the given z on the ray through pixel (x, y)."""
        cx, cy = self.principal_point
        return np.array([(x - cx) * depth / self.focal_px, (y - cy) * depth / self.focal_px, depth])

    def cropped(self, x0, y0, width, height):
        """Intrinsics of the sub-image whose top-left pixel is (x0, y0)."""
        cx, cy = self.principal_point
        return _CroppedIntrinsics(self.focal_px, (cx - x0, cy - y0), (width, height), self.pixel_pitch)


@dataclass(frozen=True)
class _CroppedIntrinsics(CameraIntrinsics):
    # crops legitimately move the principal point off-image
    def __post_init__(self):
        w, h = self.image_size
        if not (self.focal_px > 0 and w > 0 and h > 0):
            raise ConfigError("invalid cropped intrinsics")
        object.__setattr__(self, "principal_point", tuple(float(c) for c in self.principal_point))
        object.__setattr__(self, "image_size", (int(w), int(h)))


@dataclass(frozen=True)
class ImagePoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"non-finite image point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def distance(self, other):
        ox, oy = other
        return math.hypot(self.x - ox, self.y - oy)


def gaze_direction(phi, tau):
    """Unit optical-axis direction for rotation ``phi`` and tilt ``tau``."""
    if not (0.0 <= tau < math.pi / 2):
        raise DomainError(f"tau must lie in [0, pi/2), got {tau!r}")
    st = math.sin(tau)
    return np.array([st * math.sin(phi), -st * math.cos(phi), -math.cos(tau)])


def tilt_direction(phi):
    """Image-plane direction of the projected optical axis."""
    return np.array([math.sin(phi), -math.cos(phi)])


def pose_angles(g):
    """Inverse of :func:`gaze_direction` for a unit vector with g.z < 0."""
    g = np.asarray(g, dtype=float)
    g = g / np.linalg.norm(g)
    if g[2] >= 0:
        raise GeometryError("gaze direction does not face the camera")
    tau = math.atan2(math.hypot(g[0], g[1]), -g[2])
    phi = wrap_angle(math.atan2(g[0], -g[1])) if tau > 0 else 0.0
    return phi, tau


@dataclass(frozen=True, eq=False)
class EyePose:
    """Limbus center (mm, camera frame), rotation ``phi`` and tilt ``tau``.

    ``corneal_center`` is derived as L - d_LC * g; pass ``eye`` to use
    non-default anatomy.
    """

    limbus_center: np.ndarray
    phi: float
    tau: float
    eye: AnatomicalEye = field(default=DEFAULT_EYE, repr=False)

    def __post_init__(self):
        lc = np.array(self.limbus_center, dtype=float).reshape(3)
        if not np.all(np.isfinite(lc)):
            raise DomainError("limbus center must be finite")
        if lc[2] <= 0:
            raise GeometryError("limbus center must lie in front of the camera")
        if not (0.0 <= self.tau < math.pi / 2):
            raise DomainError(f"tau must lie in [0, pi/2), got {self.tau!r}")
        lc.setflags(write=False)
        object.__setattr__(self, "limbus_center", lc)
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def gaze(self):
        return gaze_direction(self.phi, self.tau)

    @property
    def corneal_center(self):
        return self.limbus_center - self.eye.d_limbus_corneal * self.gaze

    @property
    def depth(self):
        return float(self.limbus_center[2])

    def flipped(self):
        """The other branch of the tilt ambiguity: (phi + pi, tau)."""
        return EyePose(self.limbus_center, self.phi + math.pi, self.tau, self.eye)

    def with_angles(self, phi, tau):
        return EyePose(self.limbus_center, phi, tau, self.eye)

    @classmethod
    def from_gaze(cls, limbus_center, g, eye=DEFAULT_EYE):
        phi, tau = pose_angles(g)
        return cls(limbus_center, phi, tau, eye)

    @classmethod
    def from_corneal_center(cls, corneal_center, phi, tau, eye=DEFAULT_EYE):
        lc = np.asarray(corneal_center, dtype=float) + eye.d_limbus_corneal * gaze_direction(phi, tau)
        return cls(lc, phi, tau, eye)


@dataclass(frozen=True)
class Ellipse:
    """Projected limbus: semi-axes, center and major-axis orientation.

    ``phi`` is the angle from image +x to the major axis. Stored unreduced:
    phi and phi + pi describe the same curve but different tilt branches.
    """

    r_max: float
    r_min: float
    center: tuple
    phi: float = 0.0

    def __post_init__(self):
        if not (self.r_min > 0 and math.isfinite(self.r_max)):
            raise DomainError(f"ellipse radii must be positive, got ({self.r_max}, {self.r_min})")
        if self.r_min > self.r_max * (1.0 + 1e-12):
            raise DomainError("r_min must not exceed r_max")
        cx, cy = self.center
        object.__setattr__(self, "center", (float(cx), float(cy)))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "r_min", float(min(self.r_min, self.r_max)))
        object.__setattr__(self, "phi", float(self.phi))

    @property
    def x(self):
        return self.center[0]

    @property
    def y(self):
        return self.center[1]

    def as_row(self):
        """(cx, cy, r_max, r_min, phi), the layout the kernels expect."""
        return (self.center[0], self.center[1], self.r_max, self.r_min, self.phi)

    def grown(self, delta):
        """Ellipse with both semi-axes changed by ``delta`` (may be negative)."""
        return Ellipse(self.r_max + delta, self.r_min + delta, self.center, self.phi)

    def half_extent(self):
        """Half-width and half-height of the axis-aligned bounding box."""
        c, s = math.cos(self.phi), math.sin(self.phi)
        hw = math.sqrt((self.r_max * c) ** 2 + (self.r_min * s) ** 2)
        hh = math.sqrt((self.r_max * s) ** 2 + (self.r_min * c) ** 2)
        return hw, hh

    def inside_image(self, width, height, margin=0.0):
        hw, hh = self.half_extent()
        x, y = self.center
        return (x - hw - margin >= 0 and y - hh - margin >= 0
                and x + hw + margin <= width - 1 and y + hh + margin <= height - 1)

    def normalized_rho(self, x, y):
        """sqrt((a/r_max)^2 + (b/r_min)^2) in the ellipse frame; 1 on the curve."""
        c, s = math.cos(self.phi), math.sin(self.phi)
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        a = dx * c + dy * s
        b = dy * c - dx * s
        return np.sqrt((a / self.r_max) ** 2 + (b / self.r_min) ** 2)

    def boundary(self, n=360):
        t = np.linspace(0.0, TWO_PI, n, endpoint=False)
        c, s = math.cos(self.phi), math.sin(self.phi)
        a = self.r_max * np.cos(t)
        b = self.r_min * np.sin(t)
        return np.column_stack([self.center[0] + a * c - b * s, self.center[1] + a * s + b * c])


def project_limbus(pose, cam, eye=DEFAULT_EYE):
    """Project the limbus circle of ``pose`` to an image ellipse.

    The center is the full perspective projection of L; the shape uses weak
    perspective at the limbus depth.
    """
    g = pose.gaze
    if g[2] >= 0:
        raise GeometryError("limbus faces away from the camera")
    depth = pose.depth
    if depth <= 0:
        raise GeometryError("limbus is behind the camera")
    r_max = cam.focal_px * eye.r_limbus / depth
    c = cam.project(pose.limbus_center)
    return Ellipse(r_max, r_max * math.cos(pose.tau), (c.x, c.y), pose.phi)


def grp_offset_mm(tau, eye=DEFAULT_EYE):
    """Signed image-plane offset (mm at eye depth) from limbus center to GRP.

    r_C sin(tau / 2) - d_LC sin(tau): the surface normal at the reflection
    point bisects the optical axis and the (distant) camera direction. The
    offset lies along the projected tilt direction (sin phi, -cos phi).
    """
    if not (0.0 <= tau < math.pi / 2):
        raise DomainError(f"tau must lie in [0, pi/2), got {tau!r}")
    return eye.r_corneal * math.sin(tau / 2.0) - eye.d_limbus_corneal * math.sin(tau)


def grp_pixel(pose, cam, eye=DEFAULT_EYE):
    """Closed-form gaze reflection point for the pose's own axis."""
    if pose.tau / 2.0 > eye.cap_half_angle:
        raise GeometryError("reflection point leaves the visible corneal cap")
    center = cam.project(pose.limbus_center)
    shift = grp_offset_mm(pose.tau, eye) * cam.focal_px / pose.depth
    d = tilt_direction(pose.phi)
    return ImagePoint(center.x + shift * d[0], center.y + shift * d[1])


def grp_raytrace_oracle(pose, cam, eye=DEFAULT_EYE, tol=1e-14, max_iter=200):
    """Gaze reflection point by direct ray tracing against the corneal sphere.

    Searches the meridian through the camera for the surface point whose
    normal bisects the optical axis and the direction to the camera center,
    so a ray arriving along -g is mirrored into the camera. Independent of
    :func:`grp_offset_mm`; used to check it.
    """
    g = pose.gaze
    center = pose.corneal_center
    to_cam = -center
    if np.linalg.norm(to_cam) <= eye.r_corneal:
        raise GeometryError("camera lies inside the corneal sphere")
    along = float(np.dot(to_cam, g))
    perp = to_cam - along * g
    perp_len = float(np.linalg.norm(perp))
    if perp_len < 1e-15 * np.linalg.norm(to_cam):
        return cam.project(center + eye.r_corneal * g)
    w = perp / perp_len
    beta = math.atan2(perp_len, along)

    def residual(alpha):
        n = math.cos(alpha) * g + math.sin(alpha) * w
        s = center + eye.r_corneal * n
        v = -s / np.linalg.norm(s)
        return alpha - angle_between(n, v)

    lo, hi = 0.0, beta
    f_lo = residual(lo)
    if f_lo > 0 or residual(hi) < 0:
        raise GeometryError("no reflection solution on the camera-facing meridian")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    else:
        raise NumericError("reflection search did not converge")

    alpha = 0.5 * (lo + hi)
    if alpha > eye.cap_half_angle:
        raise GeometryError("reflection point lies outside the corneal cap")
    n = math.cos(alpha) * g + math.sin(alpha) * w
    s = center + eye.r_corneal * n
    if np.dot(n, -s) <= 0:
        raise GeometryError("reflection point is not visible from the camera")
    return cam.project(s)


def corneal_scene_direction(pixel, pose, cam, eye=DEFAULT_EYE):
    """Scene direction seen at ``pixel`` through the mirror of the corneal sphere.

    Used to express an image-space point-of-gaze error as an angle.
    """
    px, py = pixel
    d = cam.ray(px, py)
    center = pose.corneal_center
    dc = float(np.dot(d, center))
    disc = dc * dc - float(np.dot(center, center)) + eye.r_corneal ** 2
    if disc < 0:
        raise GeometryError("pixel ray misses the corneal sphere")
    s = (dc - math.sqrt(disc)) * d
    n = (s - center) / eye.r_corneal
    r = d - 2.0 * float(np.dot(d, n)) * n
    return r / np.linalg.norm(r)


@dataclass(frozen=True, eq=False)
class GazeEstimate:
    """Per-frame output: ellipse, pose, GRP pixel and confidence in [0, 1]."""

    ellipse: Ellipse = None
    pose: EyePose = None
    grp: ImagePoint = None
    confidence: float = 0.0
    flags: frozenset = frozenset()
    score: float = 0.0

    @property
    def ok(self):
        return self.grp is not None and not self.flags

    def visual_ray(self):
        """Origin (corneal center) and direction of the line of sight, if known."""
        if self.pose is None:
            return None
        return self.pose.corneal_center, self.pose.gaze
