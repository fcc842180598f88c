"""Flat ``section.key = value`` run configuration.

Every key has a default; a config file and then ``--set`` overrides replace
them. Unknown keys are rejected so typos do not silently fall back.
"""

import hashlib
import math
from dataclasses import dataclass, field

from .detector import HoughConfig
from .errors import ConfigError
from .gaze import Kappa
from .geometry import AnatomicalEye, CameraIntrinsics
from .optics import RigSpec
from .pose import AmbiguityPolicy
from .render import RenderStyle
from .tracker import MotionNoise, TrackerConfig, TrackingParams

MODES = ("detect", "track", "simulate", "sensitivity", "kappa-conv", "accuracy", "design",
         "autofocus-calib")

DEFAULTS = {
    "run.seed": 0,
    "run.input": "",
    "run.depth_mm": 500.0,
    "run.overlays": True,

    "camera.width": 480,
    "camera.height": 480,
    "camera.focal_px": 14000.0,
    "camera.cx": "auto",
    "camera.cy": "auto",

    "eye.r_corneal": 7.7,
    "eye.d_limbus_corneal": 5.6,
    "eye.r_limbus": 5.6,

    "hough.m": 8,
    "hough.n": 12,
    "hough.jitter": 10.0,
    "hough.candidates": 12,
    "hough.A": 1.0,
    "hough.B": 1.0,
    "hough.N": "auto",
    "hough.delta": 2.0,
    "hough.edge_threshold": 20.0,
    "hough.seed": 0,
    "hough.iris_dark": True,
    "hough.edge_term": "contour",
    "hough.refine": True,
    "hough.min_vote_fraction": 0.25,

    "pf.count": 500,
    "pf.sigma_center": 0.5,
    "pf.sigma_phi": 3.0,
    "pf.sigma_tau": 1.5,
    "pf.sigma_depth": 2.0,
    "pf.temperature": "auto",
    "pf.ess_ratio": 0.5,
    "pf.lost_after": 10,
    "pf.refine": True,

    "pose.ambiguity": "hemisphere",
    "pose.roi": (0.0, 0.0, 0.0),

    "render.iris": 60.0,
    "render.sclera": 200.0,
    "render.antialias": True,
    "render.supersample": 4,
    "render.noise_sigma": 0.0,
    "render.eyelid": 0.0,
    "render.skin": 150.0,

    "kappa.h_deg": 0.0,
    "kappa.v_deg": 0.0,

    "sim.frames": 100,
    "sim.tau_start": 5.0,
    "sim.tau_end": 25.0,
    "sim.phi_deg": 30.0,
    "sim.depth": 500.0,
    "sim.x": 0.05,
    "sim.y": -0.1,
    "sim.noise_sigma": 8.0,
    "sim.blank_frames": (),

    "sensitivity.tau_deg": 20.0,
    "sensitivity.phi_deg": 0.0,
    "sensitivity.depth": 500.0,
    "sensitivity.max_px": 3.0,
    "sensitivity.max_tilt_deg": 6.0,
    "sensitivity.steps": 13,

    "kconv.noise_px": 0.5,
    "kconv.trials": 50,
    "kconv.max_points": 10,
    "kconv.board_z": -300.0,
    "kconv.eye_depth": 510.0,

    "accuracy.subjects": 4,
    "accuracy.board_distances": (800.0, 1600.0),
    "accuracy.eye_depth": 500.0,
    "accuracy.noise_sigma": 4.0,
    "accuracy.calibration_points": 5,
    "accuracy.kappa_max_deg": 5.0,

    "rig.interpersonal_distance": 550.0,
    "rig.camera_subject_distance": 500.0,
    "rig.focal_length": 35.0,
    "rig.pixel_pitch": 0.0025,
    "rig.sensor_width": 2048,
    "rig.sensor_height": 2048,
    "rig.coverage_v": 150.0,
    "rig.coverage_h": 250.0,
    "rig.required_face_px": 45.0,
    "rig.overlap": 0.0,
    "rig.face_fraction": 0.2,

    "design.min_distance": 300.0,
    "design.max_distance": 1000.0,
    "design.step": 50.0,

    "autofocus.depths": (400.0, 450.0, 500.0, 550.0, 600.0, 650.0, 700.0),
    "autofocus.slope": 100.0,
    "autofocus.intercept": 20.0,
    "autofocus.noise": 0.0,
}

ALIASES = {"pf.sigma_d": "pf.sigma_depth"}


def parse_value(text):
    """int, float, bool, comma tuple or string, in that order of preference."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in s:
        return tuple(parse_value(p) for p in s.split(",") if p.strip())
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return s


def parse_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = line.split("=", 1)
        out[_key(key.strip(), f"{source}:{lineno}")] = parse_value(value)
    return out


def _key(key, where):
    key = ALIASES.get(key, key)
    if key not in DEFAULTS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    return key


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    key, value = item.split("=", 1)
    return _key(key.strip(), "--set"), parse_value(value)


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v) + ("," if len(v) == 1 else "")
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    mode: str
    output_dir: str
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")

    @classmethod
    def load(cls, mode, output_dir, path=None, overrides=(), seed=None, input_path=None):
        values = dict(DEFAULTS)
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            values.update(parse_text(text, path))
        for item in overrides:
            k, v = parse_override(item)
            values[k] = v
        if seed is not None:
            values["run.seed"] = int(seed)
        if input_path is not None:
            values["run.input"] = input_path
        return cls(mode, output_dir, values)

    def __getitem__(self, key):
        return self.values[key]

    def num(self, key, kind=float):
        v = self.values[key]
        try:
            if kind is int and isinstance(v, float) and not v.is_integer():
                raise ValueError
            if isinstance(v, bool):
                raise ValueError
            out = kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a {kind.__name__}, got {v!r}") from None
        if kind is float and not math.isfinite(out):
            raise ConfigError(f"{key} must be finite")
        return out

    def flag(self, key):
        v = self.values[key]
        if not isinstance(v, bool):
            raise ConfigError(f"{key} must be true or false, got {v!r}")
        return v

    def numbers(self, key):
        v = self.values[key]
        if v == "" or v == ():
            return ()
        items = v if isinstance(v, tuple) else (v,)
        try:
            return tuple(float(x) for x in items)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a comma-separated list of numbers") from None

    @property
    def seed(self):
        return self.num("run.seed", int)

    @property
    def input_path(self):
        return str(self.values["run.input"])

    def canonical(self):
        """Sorted ``key = value`` text of the effective configuration."""
        lines = [f"{k} = {format_value(self.values[k])}" for k in sorted(self.values)]
        return "\n".join([f"mode = {self.mode}"] + lines) + "\n"

    def sha256(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    # module configs

    def _build(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def camera(self):
        w, h = self.num("camera.width", int), self.num("camera.height", int)
        cx, cy = self.values["camera.cx"], self.values["camera.cy"]
        cx = (w - 1) / 2.0 if cx == "auto" else self.num("camera.cx")
        cy = (h - 1) / 2.0 if cy == "auto" else self.num("camera.cy")
        return self._build(CameraIntrinsics, self.num("camera.focal_px"), (cx, cy), (w, h))

    def eye(self):
        return self._build(AnatomicalEye, self.num("eye.r_corneal"),
                           self.num("eye.d_limbus_corneal"), self.num("eye.r_limbus"))

    def hough(self):
        n_val = self.values["hough.N"]
        n_val = "auto" if n_val == "auto" else self.num("hough.N")
        edge_term = str(self.values["hough.edge_term"])
        return self._build(
            HoughConfig, m=self.num("hough.m", int), n=self.num("hough.n", int),
            center_jitter_px=self.num("hough.jitter"),
            candidate_count=self.num("hough.candidates", int), A=self.num("hough.A"),
            B=self.num("hough.B"), N=n_val, delta=self.num("hough.delta"),
            edge_threshold=self.num("hough.edge_threshold"), seed=self.num("hough.seed", int),
            iris_dark=self.flag("hough.iris_dark"), edge_term=edge_term,
            refine=self.flag("hough.refine"),
            min_vote_fraction=self.num("hough.min_vote_fraction"))

    def tracking(self):
        noise = self._build(
            MotionNoise, self.num("pf.sigma_center"), math.radians(self.num("pf.sigma_phi")),
            math.radians(self.num("pf.sigma_tau")), self.num("pf.sigma_depth"))
        t = self.values["pf.temperature"]
        t = None if t == "auto" else self.num("pf.temperature")
        tracker = self._build(TrackerConfig, self.num("pf.count", int), t,
                              self.num("pf.ess_ratio"), self.num("pf.lost_after", int),
                              self.flag("pf.refine"))
        return TrackingParams(self.hough(), noise, tracker)

    def policy(self):
        roi = self.numbers("pose.roi")
        if len(roi) != 3:
            raise ConfigError("pose.roi must be three numbers")
        return self._build(AmbiguityPolicy, str(self.values["pose.ambiguity"]), roi)

    def render_style(self, noise_sigma=None, seed=0):
        sigma = self.num("render.noise_sigma") if noise_sigma is None else noise_sigma
        return self._build(
            RenderStyle, self.num("render.iris"), self.num("render.sclera"),
            self.flag("render.antialias"), self.num("render.supersample", int), sigma,
            self.num("render.eyelid"), self.num("render.skin"), seed)

    def kappa(self):
        return self._build(Kappa.from_degrees, self.num("kappa.h_deg"), self.num("kappa.v_deg"))

    def rig(self):
        return self._build(
            RigSpec, self.num("rig.interpersonal_distance"),
            self.num("rig.camera_subject_distance"), self.num("rig.focal_length"),
            self.num("rig.pixel_pitch"),
            (self.num("rig.sensor_width", int), self.num("rig.sensor_height", int)),
            (self.num("rig.coverage_v"), self.num("rig.coverage_h")),
            self.num("rig.required_face_px"), self.num("rig.overlap"))


def write_kappa_profile(path, kappa):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"kappa.h_deg = {kappa.h_deg!r}\nkappa.v_deg = {kappa.v_deg!r}\n")


def read_kappa_profile(path):
    with open(path, encoding="utf-8") as fh:
        values = parse_text(fh.read(), path)
    extra = set(values) - {"kappa.h_deg", "kappa.v_deg"}
    if extra:
        raise ConfigError(f"unexpected keys in kappa profile: {sorted(extra)}")
    try:
        return Kappa.from_degrees(float(values.get("kappa.h_deg", 0.0)),
                                  float(values.get("kappa.v_deg", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad kappa profile {path}: {exc}") from exc
