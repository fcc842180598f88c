"""Experiment drivers behind the ``gaze`` command.

Each ``run_*`` takes a RunConfig, writes its CSV (and overlays or a report)
into the output directory, finishes with ``manifest.json`` and returns a
small summary dict.
"""

import hashlib
import json
import math
import os
import platform
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__, _kernels
from .csvio import write_csv
from .detector import fit_limbus
from .errors import ConfigError, DataError, GeometryError, NoEllipseFound
from .gaze import (FixationSample, Kappa, apply_kappa, calibrate_kappa, fixate,
                   gaze_error_deg, kappa_convergence_curve, marker_board, pog_pipeline,
                   synthetic_fixations)
from .geometry import (CameraIntrinsics, Ellipse, EyePose, angle_between,
                       corneal_scene_direction, grp_pixel, project_limbus)
from .netpbm import read_image, write_image
from .optics import (achieved_resolution, back_focal_distance, calibrate_motor_map,
                     camera_count, corneal_resolution_requirement, motor_command)
from .pose import AmbiguityPolicy, ellipse_to_pose, select_branch
from .render import blank_image, draw_overlay, gray_from_rgb, render_ellipse, render_eye_image

READ_ERROR = "read-error"


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    ellipse: object = None
    pose: object = None
    grp: object = None
    confidence: float = 0.0
    flags: frozenset = frozenset()

    def row(self):
        e, p, g = self.ellipse, self.pose, self.grp
        return [
            self.frame_index,
            e.x if e else None, e.y if e else None, e.r_max if e else None,
            e.r_min if e else None, e.phi if e else None,
            p.phi if p else None, p.tau if p else None, p.depth if p else None,
            g.x if g else None, g.y if g else None,
            self.confidence, self.flags,
        ]


def _seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def write_manifest(cfg, outputs=()):
    """Run metadata; contains nothing that changes between identical reruns."""
    files = {}
    for name in sorted(outputs):
        path = os.path.join(cfg.output_dir, name)
        files[name] = _sha256_file(path)
    manifest = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256(),
        "config": cfg.canonical().splitlines(),
        "versions": {
            "cornealgaze": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "backend": _kernels.BACKEND,
        "outputs": files,
    }
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _prepare(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)


# frame sources

def synthetic_sequence(cfg):
    """True poses and rendered frames of the configured tau sweep."""
    cam, eye = cfg.camera(), cfg.eye()
    n = cfg.num("sim.frames", int)
    if n < 1:
        raise ConfigError("sim.frames must be at least 1")
    taus = np.radians(np.linspace(cfg.num("sim.tau_start"), cfg.num("sim.tau_end"), n))
    limbus = np.array([cfg.num("sim.x"), cfg.num("sim.y"), cfg.num("sim.depth")])
    phi = math.radians(cfg.num("sim.phi_deg"))
    blanks = {int(b) for b in cfg.numbers("sim.blank_frames")}
    sigma = cfg.num("sim.noise_sigma")
    poses, frames = [], []
    for i, tau in enumerate(taus):
        pose = EyePose(limbus, phi, float(tau), eye)
        poses.append(pose)
        if i in blanks:
            frames.append(blank_image(cam, int(cfg.num("render.sclera"))))
            continue
        style = cfg.render_style(sigma, _seed(cfg.seed, 1, i))
        frames.append(render_eye_image(pose, cam, eye, style))
    return poses, frames


def _input_frames(cfg):
    """(name, image or exception) for every PGM/PPM file in the input directory."""
    path = cfg.input_path
    if not os.path.isdir(path):
        raise DataError(f"input directory {path!r} does not exist")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith((".pgm", ".ppm", ".pnm")))
    if not names:
        raise DataError(f"no PGM/PPM frames in {path!r}")
    out = []
    for name in names:
        try:
            out.append((name, read_image(os.path.join(path, name))))
        except (DataError, OSError) as exc:
            out.append((name, exc))
    return out


def _frames(cfg):
    if cfg.input_path:
        return _input_frames(cfg)
    _, frames = synthetic_sequence(cfg)
    return [(f"frame_{i:04d}", f) for i, f in enumerate(frames)]


def _camera_for(cfg, image):
    cam = cfg.camera()
    h, w = image.shape[:2]
    if (w, h) == cam.image_size:
        return cam
    return type(cam).centered(w, h, cam.focal_px)


def _write_overlay(cfg, index, image, ellipse, grp):
    if not cfg.flag("run.overlays"):
        return
    folder = os.path.join(cfg.output_dir, "overlays")
    os.makedirs(folder, exist_ok=True)
    write_image(os.path.join(folder, f"frame_{index:04d}.ppm"), draw_overlay(image, ellipse, grp))


# modes

def run_detect(cfg):
    """Independent detection on every frame."""
    _prepare(cfg)
    eye, hough, policy, kappa = cfg.eye(), cfg.hough(), cfg.policy(), cfg.kappa()
    depth = cfg.num("run.depth_mm")
    records = []
    for i, (_, image) in enumerate(_frames(cfg)):
        if isinstance(image, Exception):
            records.append(FrameRecord(i, flags=frozenset({READ_ERROR})))
            continue
        gray = gray_from_rgb(image)
        cam = _camera_for(cfg, gray)
        try:
            scored = fit_limbus(gray, depth, cam, eye, hough)
        except NoEllipseFound:
            records.append(FrameRecord(i, flags=frozenset({"low-confidence", "no-ellipse"})))
            _write_overlay(cfg, i, image, None, None)
            continue
        pose, _ = select_branch(ellipse_to_pose(scored.ellipse, cam, eye), policy)
        flags = set()
        try:
            grp = grp_pixel(apply_kappa(pose, kappa), cam, eye)
        except (GeometryError, ValueError):
            grp = None
            flags.add("low-confidence")
        records.append(FrameRecord(i, scored.ellipse, pose, grp, scored.confidence,
                                   frozenset(flags)))
        _write_overlay(cfg, i, image, scored.ellipse, grp)
    write_csv(os.path.join(cfg.output_dir, "frames.csv"), "frames", [r.row() for r in records])
    write_manifest(cfg, ["frames.csv"])
    return {"frames": len(records), "detected": sum(r.ellipse is not None for r in records)}


def _track(cfg, frames):
    eye, params, policy, kappa = cfg.eye(), cfg.tracking(), cfg.policy(), cfg.kappa()
    depth = cfg.num("run.depth_mm")
    state, records, estimates = None, [], []
    for i, (_, image) in enumerate(frames):
        if isinstance(image, Exception):
            records.append(FrameRecord(i, flags=frozenset({READ_ERROR})))
            estimates.append(None)
            continue
        gray = gray_from_rgb(image)
        cam = _camera_for(cfg, gray)
        hint = depth if state is None else None
        state, est = pog_pipeline(gray, state, hint, cam, eye, kappa, params,
                                  _seed(cfg.seed, 2, i), policy)
        records.append(FrameRecord(i, est.ellipse, est.pose, est.grp, est.confidence, est.flags))
        estimates.append(est)
        _write_overlay(cfg, i, image, est.ellipse, est.grp)
    return records, estimates


def run_track(cfg):
    """Sequential tracking; a lost track is re-detected on the next frame."""
    _prepare(cfg)
    records, _ = _track(cfg, _frames(cfg))
    write_csv(os.path.join(cfg.output_dir, "frames.csv"), "frames", [r.row() for r in records])
    write_manifest(cfg, ["frames.csv"])
    return {"frames": len(records), "tracked": sum(r.grp is not None for r in records)}


def run_simulate(cfg):
    """Track the synthetic sweep and compare with the ground truth."""
    _prepare(cfg)
    poses, frames = synthetic_sequence(cfg)
    cam, eye, kappa = cfg.camera(), cfg.eye(), cfg.kappa()
    names = [(f"frame_{i:04d}", f) for i, f in enumerate(frames)]
    records, estimates = _track(cfg, names)
    rows, tau_err = [], []
    for i, (truth, est) in enumerate(zip(poses, estimates)):
        true_grp = grp_pixel(apply_kappa(truth, kappa), cam, eye)
        row = {"frame_index": i, "true_phi": truth.phi, "true_tau": truth.tau,
               "true_depth": truth.depth, "flags": records[i].flags,
               "confidence": records[i].confidence}
        if est is not None and est.pose is not None:
            # the reported pose is the visual axis; undo kappa for the tilt comparison
            optical = apply_kappa(est.pose, kappa.negated())
            err = math.degrees(abs(optical.tau - truth.tau))
            tau_err.append(err)
            row.update(est_phi=optical.phi, est_tau=optical.tau, est_depth=optical.depth,
                       tau_error_deg=err)
            if est.grp is not None:
                row["grp_error_px"] = est.grp.distance(true_grp)
        rows.append(row)
    write_csv(os.path.join(cfg.output_dir, "simulate.csv"), "simulate", rows)
    write_manifest(cfg, ["simulate.csv"])
    return {"frames": len(rows), "mean_tau_error_deg": float(np.mean(tau_err)) if tau_err else None,
            "lost": sum("tracking-lost" in r.flags for r in records)}


def sensitivity_curves(cam, eye, tau, phi, depth, max_px, max_tilt_deg, steps):
    """Gaze error (deg) for perturbed center, axes and tilt of the reference ellipse.

    The error is the angle between the scene directions seen at the perturbed
    and unperturbed GRP on the true cornea. Returns {group: [(perturbation, error)]}.
    """
    truth = EyePose(np.array([0.0, 0.0, depth]), phi, tau, eye)
    ref = project_limbus(truth, cam, eye)
    ref_dir = corneal_scene_direction(grp_pixel(truth, cam, eye), truth, cam, eye)
    follow = AmbiguityPolicy("continuity")

    def error(e):
        pose, _ = select_branch(ellipse_to_pose(e, cam, eye), follow, truth)
        d = corneal_scene_direction(grp_pixel(pose, cam, eye), truth, cam, eye)
        return math.degrees(angle_between(d, ref_dir))

    px = np.linspace(-max_px, max_px, steps)
    tilts = np.linspace(-max_tilt_deg, max_tilt_deg, steps)
    out = {"center": [], "axes": [], "tilt": []}
    for d in px:
        out["center"].append((float(d), error(Ellipse(ref.r_max, ref.r_min, (ref.x + d, ref.y), ref.phi))))
        big, small = ref.r_max + d, ref.r_min + d
        out["axes"].append((float(d), error(Ellipse(big, min(small, big), (ref.x, ref.y), ref.phi))))
    for t in tilts:
        e = Ellipse(ref.r_max, ref.r_min, (ref.x, ref.y), ref.phi + math.radians(t))
        out["tilt"].append((float(t), error(e)))
    return out


def run_sensitivity(cfg):
    _prepare(cfg)
    steps = cfg.num("sensitivity.steps", int)
    if steps < 2:
        raise ConfigError("sensitivity.steps must be at least 2")
    curves = sensitivity_curves(
        cfg.camera(), cfg.eye(), math.radians(cfg.num("sensitivity.tau_deg")),
        math.radians(cfg.num("sensitivity.phi_deg")), cfg.num("sensitivity.depth"),
        cfg.num("sensitivity.max_px"), cfg.num("sensitivity.max_tilt_deg"), steps)
    rows = [(group, p, e) for group in ("axes", "center", "tilt") for p, e in curves[group]]
    write_csv(os.path.join(cfg.output_dir, "sensitivity.csv"), "sensitivity", rows)
    write_manifest(cfg, ["sensitivity.csv"])
    return curves


def run_kappa_conv(cfg):
    _prepare(cfg)
    cam, eye, kappa = cfg.camera(), cfg.eye(), cfg.kappa()
    center = np.array([0.0, 0.0, cfg.num("kconv.eye_depth")])
    pool = synthetic_fixations(marker_board(cfg.num("kconv.board_z")), center, kappa, eye)
    curve = kappa_convergence_curve(kappa, pool, cfg.num("kconv.noise_px"),
                                    cfg.num("kconv.trials", int), cfg.seed, cam, eye,
                                    cfg.num("kconv.max_points", int))
    write_csv(os.path.join(cfg.output_dir, "kappa_conv.csv"), "kappa_conv", curve)
    write_manifest(cfg, ["kappa_conv.csv"])
    return curve


def _crop_camera(cam_full_focal, size, point):
    """Intrinsics of a size[0] x size[1] crop centered on the projected ``point``."""
    w, h = size
    # a virtual sensor large enough that any eye position is on it
    x = cam_full_focal * point[0] / point[2]
    y = cam_full_focal * point[1] / point[2]
    x0 = int(math.floor(x - (w - 1) / 2.0 + 0.5))
    y0 = int(math.floor(y - (h - 1) / 2.0 + 0.5))
    base = CameraIntrinsics(cam_full_focal, (0.0, 0.0), (1, 1))
    return base.cropped(x0, y0, w, h)


def measure_fixation(pose, cfg, cam_focal, size, eye, hough, seed):
    """Render the fixation, detect the limbus and return the recovered pose."""
    cam = _crop_camera(cam_focal, size, pose.limbus_center)
    e = project_limbus(pose, cam, eye)
    style = cfg.render_style(cfg.num("accuracy.noise_sigma"), seed)
    image = render_ellipse(e, cam.width, cam.height, style)
    scored = fit_limbus(image, pose.depth, cam, eye, hough)
    # the simulated subject's branch is known; ambiguity is studied separately
    return select_branch(ellipse_to_pose(scored.ellipse, cam, eye),
                         AmbiguityPolicy("continuity"), pose)[0]


def accuracy_experiment(cfg):
    """Rows of the marker-board accuracy table, one per (subject, board distance)."""
    cam, eye, hough = cfg.camera(), cfg.eye(), cfg.hough()
    n_sub = cfg.num("accuracy.subjects", int)
    dists = cfg.numbers("accuracy.board_distances")
    eye_z = cfg.num("accuracy.eye_depth")
    kmax = cfg.num("accuracy.kappa_max_deg")
    n_cal = cfg.num("accuracy.calibration_points", int)
    rows = []
    for s in range(n_sub):
        rng = np.random.default_rng(_seed(cfg.seed, 3, s))
        kappa = Kappa.from_degrees(*rng.uniform(-kmax, kmax, 2))
        center = np.array([*rng.uniform(-3.0, 3.0, 2), eye_z])
        measured = {}
        for di, dist in enumerate(dists):
            targets = marker_board(eye_z - dist, spacing_mm=150.0 * dist / 800.0)
            samples = []
            for ti, t in enumerate(targets):
                truth = fixate(t, center, kappa, eye)
                pose = measure_fixation(truth, cfg, cam.focal_px, cam.image_size, eye, hough,
                                        _seed(cfg.seed, 4, s, di, ti))
                samples.append(FixationSample(pose, t))
            measured[dist] = samples
        # calibrate on a few markers of the nearest board, evaluate on every board
        near = measured[dists[0]]
        pick = rng.choice(len(near), size=min(n_cal, len(near)), replace=False)
        k_est, _ = calibrate_kappa([near[i] for i in sorted(pick)])
        for dist in dists:
            samples = measured[dist]
            without = np.mean([gaze_error_deg(x.pose, x.target_position) for x in samples])
            with_k = np.mean([gaze_error_deg(x.pose, x.target_position, k_est) for x in samples])
            rows.append({"subject": s, "depth_mm": dist, "kappa_h_deg": kappa.h_deg,
                         "kappa_v_deg": kappa.v_deg, "error_without_deg": float(without),
                         "error_with_deg": float(with_k)})
    return rows


def run_accuracy(cfg):
    _prepare(cfg)
    rows = accuracy_experiment(cfg)
    write_csv(os.path.join(cfg.output_dir, "accuracy.csv"), "accuracy", rows)
    write_manifest(cfg, ["accuracy.csv"])
    return rows


def design_report(cfg):
    rig, eye = cfg.rig(), cfg.eye()
    required = corneal_resolution_requirement(rig, eye, cfg.num("rig.face_fraction"))
    achieved = achieved_resolution(rig)
    total, (rows, cols), (fh, fw) = camera_count(rig)
    lines = [
        f"required resolution: {required:.1f} px/cm",
        f"achieved resolution: {achieved:.1f} px/cm at {rig.camera_subject_distance:g} mm",
        f"meets requirement: {'yes' if achieved >= required else 'no'}",
        f"camera footprint: {fw:.1f} x {fh:.1f} mm (w x h)",
        f"cameras: {total} ({rows} rows x {cols} columns) for "
        f"{rig.coverage_box[1]:g} x {rig.coverage_box[0]:g} mm coverage",
        f"back focal distance at {rig.camera_subject_distance:g} mm: "
        f"{back_focal_distance(rig.focal_length, rig.camera_subject_distance):.4f} mm",
    ]
    return required, achieved, lines


def run_design(cfg):
    _prepare(cfg)
    rig = cfg.rig()
    required, _, lines = design_report(cfg)
    lo, hi, step = cfg.num("design.min_distance"), cfg.num("design.max_distance"), cfg.num("design.step")
    if not (step > 0 and hi >= lo > rig.focal_length):
        raise ConfigError("design sweep needs step > 0 and focal length < min <= max distance")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    rows = [(lo + i * step, achieved_resolution(rig, lo + i * step), required) for i in range(n)]
    write_csv(os.path.join(cfg.output_dir, "design.csv"), "design", rows)
    with open(os.path.join(cfg.output_dir, "design.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    write_manifest(cfg, ["design.csv", "design.txt"])
    return lines


def run_autofocus_calib(cfg):
    """Fit the motor map to synthetic (depth, motor) readings and replay the commands."""
    _prepare(cfg)
    f = cfg.num("rig.focal_length")
    depths = cfg.numbers("autofocus.depths")
    slope, intercept = cfg.num("autofocus.slope"), cfg.num("autofocus.intercept")
    noise = cfg.num("autofocus.noise")
    rng = np.random.default_rng(_seed(cfg.seed, 5))
    pairs = []
    for d in depths:
        m = slope * back_focal_distance(f, d) + intercept
        if noise > 0:
            m += rng.normal(0.0, noise)
        pairs.append((d, m))
    mm = calibrate_motor_map(pairs, f)
    rows = [(d, back_focal_distance(f, d), m, mm(back_focal_distance(f, d)),
             motor_command(d, f, mm)) for d, m in pairs]
    write_csv(os.path.join(cfg.output_dir, "autofocus.csv"), "autofocus", rows)
    with open(os.path.join(cfg.output_dir, "motor_map.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(f"slope = {mm.slope:.6g}\nintercept = {mm.intercept:.6g}\n"
                 f"rms_residual = {mm.rms_residual:.6g}\n")
    write_manifest(cfg, ["autofocus.csv", "motor_map.txt"])
    return mm


RUNNERS = {
    "detect": run_detect,
    "track": run_track,
    "simulate": run_simulate,
    "sensitivity": run_sensitivity,
    "kappa-conv": run_kappa_conv,
    "accuracy": run_accuracy,
    "design": run_design,
    "autofocus-calib": run_autofocus_calib,
}
