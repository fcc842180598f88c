"""Time the Hough vote and ellipse-count kernels on every available backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from cornealgaze import _kernels
from cornealgaze.detector import _bins, _prefix, center_candidates, detect_edges, radius_candidates
from cornealgaze.geometry import CameraIntrinsics, EyePose, project_limbus
from cornealgaze.render import RenderStyle, render_eye_image


def workload():
    cam = CameraIntrinsics.centered(480, 480, 14000.0)
    pose = EyePose(np.array([0.2, -0.1, 520.0]), 0.6, 0.35)
    img = render_eye_image(pose, cam, style=RenderStyle(noise_sigma=8.0, seed=1))
    edges = detect_edges(img)
    centers = np.array([tuple(c) for c in center_candidates(cam.principal_point)])
    radii = radius_candidates(520.0, cam)
    phis, ratios = _bins()
    prefix = _prefix(img < 130)
    truth = np.array(project_limbus(pose, cam).as_row())
    rng = np.random.default_rng(0)
    rows = truth + rng.normal(0.0, [3.0, 3.0, 2.0, 2.0, 0.1], (500, 5))
    rows[:, 3] = np.minimum(rows[:, 3], rows[:, 2])
    return edges.points, centers, float(radii[0]), len(radii), phis, ratios, prefix, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    pts, centers, l0, nr, phis, ratios, prefix, rows = workload()
    print(f"{len(pts)} edge points, {len(centers)} centers, {len(rows)} ellipses")
    timings = {}
    for name, mod in sorted(_kernels.available_backends().items()):
        vote = min(timeit.repeat(lambda: mod.hough_vote(pts, centers, l0, nr, phis, ratios),
                                 number=1, repeat=args.repeat))
        count = min(timeit.repeat(lambda: mod.ellipse_counts(prefix, rows),
                                  number=1, repeat=args.repeat))
        timings[name] = (vote, count)
        print(f"{name:>8}: hough_vote {vote * 1e3:8.2f} ms   ellipse_counts {count * 1e3:8.2f} ms")
    if len(timings) == 2:
        (pv, pc), (cv, cc) = timings["python"], timings["compiled"]
        print(f" speedup: hough_vote {pv / cv:.1f}x   ellipse_counts {pc / cc:.1f}x")


if __name__ == "__main__":
    main()
