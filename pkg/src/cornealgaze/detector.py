"""Limbus ellipse detection: edges, Hough search and region/edge scoring.

The search space follows the eye model: major radii sit within a few pixels of
f * RL / D, centers are the crop center plus a handful of jittered points, and
tilt/orientation are discretized. Candidates are ranked by votes, re-ranked
by the region/edge score, and the winner is polished by a robust
least-squares fit to nearby edge points.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .errors import ConfigError, DomainError, NoEllipseFound
from .geometry import DEFAULT_EYE, Ellipse, ImagePoint

TILT_BINS_DEG = tuple(range(0, 50, 5))
ORIENTATION_STEP_DEG = 10


@dataclass(frozen=True)
class HoughConfig:
    m: int = 8
    n: int = 12
    center_jitter_px: float = 10.0
    candidate_count: int = 12
    A: float = 1.0
    B: float = 1.0
    N: object = "auto"
    delta: float = 2.0
    edge_threshold: float = 20.0
    seed: int = 0
    iris_dark: bool = True
    edge_term: str = "contour"
    refine: bool = True
    min_vote_fraction: float = 0.25

    def __post_init__(self):
        if not (1 <= self.m < 20):
            raise ConfigError(f"hough.m must be in [1, 20), got {self.m}")
        if not (1 <= self.n < 20):
            raise ConfigError(f"hough.n must be in [1, 20), got {self.n}")
        if self.candidate_count < 1:
            raise ConfigError("hough.candidates must be at least 1")
        if self.A < 0 or self.B < 0:
            raise ConfigError("score weights A and B must be non-negative")
        if not self.delta > 0:
            raise ConfigError("hough.delta must be positive")
        if self.center_jitter_px < 0:
            raise ConfigError("hough.jitter must be non-negative")
        if self.edge_term not in ("contour", "center"):
            raise ConfigError("hough.edge_term must be 'contour' or 'center'")
        if not (self.N == "auto" or isinstance(self.N, (int, float))):
            raise ConfigError("hough.N must be a number or 'auto'")


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Edge pixels as (x, y) coordinates with their gradient magnitudes."""

    points: np.ndarray
    magnitudes: np.ndarray
    shape: tuple

    def __len__(self):
        return len(self.points)

    def mask(self):
        m = np.zeros(self.shape, dtype=bool)
        if len(self.points):
            m[self.points[:, 1].astype(int), self.points[:, 0].astype(int)] = True
        return m


@dataclass(frozen=True)
class ScoredEllipse:
    ellipse: Ellipse
    score: float
    threshold: float = float("nan")
    confidence: float = 0.0


def _as_gray(image):
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114
    if img.ndim != 2 or img.size == 0:
        raise DomainError("expected a non-empty grayscale image")
    return img


def radius_candidates(depth_mm, cam, eye=DEFAULT_EYE, cfg=HoughConfig()):
    """The 2m major radii f*RL/D + i for i = -m+1 .. m, 1 px apart."""
    if not depth_mm > 0:
        raise DomainError(f"depth must be positive, got {depth_mm!r}")
    base = cam.focal_px * eye.r_limbus / depth_mm
    radii = base + np.arange(-cfg.m + 1, cfg.m + 1, dtype=float)
    if radii[0] <= 0:
        raise DomainError("radius set reaches non-positive values; reduce hough.m")
    return radii


def center_candidates(crop_center, cfg=HoughConfig(), rng_seed=0):
    """Crop center followed by n-1 points drawn uniformly in the jitter disk."""
    rng = np.random.default_rng(rng_seed)
    k = cfg.n - 1
    r = cfg.center_jitter_px * np.sqrt(rng.random(k))
    t = 2.0 * math.pi * rng.random(k)
    cx, cy = crop_center
    out = [ImagePoint(float(cx), float(cy))]
    out += [ImagePoint(cx + float(a), cy + float(b)) for a, b in zip(r * np.cos(t), r * np.sin(t))]
    return out


def detect_edges(image, threshold=20.0):
    """Gradient-magnitude edges from normalized 3x3 Sobel kernels.

    Magnitude is in intensity units per pixel (a step of height h gives about
    h/2). Border pixels are never edges.
    """
    img = _as_gray(image)
    h, w = img.shape
    if h < 3 or w < 3 or threshold == math.inf:
        return EdgeMap(np.zeros((0, 2)), np.zeros(0), (h, w))
    gx = ((img[:-2, 2:] - img[:-2, :-2]) + 2.0 * (img[1:-1, 2:] - img[1:-1, :-2])
          + (img[2:, 2:] - img[2:, :-2])) / 8.0
    gy = ((img[2:, :-2] - img[:-2, :-2]) + 2.0 * (img[2:, 1:-1] - img[:-2, 1:-1])
          + (img[2:, 2:] - img[:-2, 2:])) / 8.0
    mag = np.hypot(gx, gy)
    ys, xs = np.nonzero(mag > threshold)
    pts = np.column_stack([xs + 1, ys + 1]).astype(float)
    return EdgeMap(pts, mag[ys, xs], (h, w))


def _bins():
    phis = np.deg2rad(np.arange(0, 180, ORIENTATION_STEP_DEG, dtype=float))
    ratios = np.cos(np.deg2rad(np.array(TILT_BINS_DEG, dtype=float)))
    ratios[0] = 1.0
    return phis, ratios


def _perimeter(a, b):
    h = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def hough_search(edges, radii, centers, cfg=HoughConfig()):
    """Top Hough bins as (ellipse, votes) pairs, best first."""
    radii = np.asarray(radii, dtype=float)
    centers = [tuple(c) for c in centers]
    if len(radii) == 0 or len(centers) == 0:
        raise DomainError("empty radius or center candidate set")
    phis, ratios = _bins()
    acc = _kernels.hough_vote(edges.points, np.array(centers, dtype=float),
                              float(radii[0]), len(radii), phis, ratios)
    n_p = len(phis)
    need = cfg.min_vote_fraction * np.array(
        [[_perimeter(r, r * q) for r in radii] for q in ratios])
    acc = np.where(acc >= need[None, None, :, :], acc, 0)
    order = np.argsort(-acc.ravel(), kind="stable")
    picked = []
    for flat in order:
        votes = int(acc.flat[flat])
        if votes <= 0 or len(picked) >= cfg.candidate_count:
            break
        ci, pi, qi, ri = np.unravel_index(flat, acc.shape)
        if any(_near(ci, pi, qi, ri, s, n_p) for s in picked):
            continue
        picked.append((ci, pi, qi, ri, votes))
    if not picked:
        raise NoEllipseFound("no Hough bin reached the minimum vote count")
    out = []
    for ci, pi, qi, ri, votes in picked:
        r = float(radii[ri])
        e = Ellipse(r, r * float(ratios[qi]), centers[ci], float(phis[pi]) if qi else 0.0)
        out.append((e, votes))
    return out


def _near(ci, pi, qi, ri, other, n_p):
    oc, op, oq, orr, _ = other
    if ci != oc or abs(int(qi) - int(oq)) > 1 or abs(int(ri) - int(orr)) > 1:
        return False
    if qi == 0 or oq == 0:
        return True
    d = abs(int(pi) - int(op)) % n_p
    return min(d, n_p - d) <= 1


def hough_candidates(edges, radii, centers, cfg=HoughConfig()):
    """Up to ``candidate_count`` distinct ellipses with the most edge votes."""
    return [e for e, _ in hough_search(edges, radii, centers, cfg)]


class ScoringContext:
    """Per-image tables for fast region/edge scoring of many ellipses."""

    def __init__(self, image, edges, cfg=HoughConfig()):
        self.image = _as_gray(image)
        self.cfg = cfg
        self.edges = edges
        self.height, self.width = self.image.shape
        self._edge_prefix = _prefix(edges.mask()) if len(edges) else None
        self._ones_prefix = None
        self._iris = {}

    def _iris_prefix(self, threshold):
        key = float(threshold)
        if key not in self._iris:
            if self.cfg.iris_dark:
                mask = self.image < key
            else:
                mask = self.image > key
            if len(self._iris) > 8:
                self._iris.clear()
            self._iris[key] = _prefix(mask)
        return self._iris[key]

    def threshold_for(self, ellipse):
        """Iris/sclera threshold N: the configured value or the auto estimate.

        Auto is the midpoint between the median inside ``ellipse`` and the
        median of a thin ring just outside it.
        """
        if self.cfg.N != "auto":
            return float(self.cfg.N)
        ring = max(self.cfg.delta, 3.0)
        hw, hh = ellipse.half_extent()
        x0 = max(int(math.floor(ellipse.x - hw - ring)) - 1, 0)
        x1 = min(int(math.ceil(ellipse.x + hw + ring)) + 1, self.width - 1)
        y0 = max(int(math.floor(ellipse.y - hh - ring)) - 1, 0)
        y1 = min(int(math.ceil(ellipse.y + hh + ring)) + 1, self.height - 1)
        if x1 < x0 or y1 < y0:
            return float(np.median(self.image))
        ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        sub = self.image[y0:y1 + 1, x0:x1 + 1]
        rho = ellipse.normalized_rho(xs, ys)
        inner = sub[rho <= 1.0]
        outer_ell = ellipse.grown(ring)
        outer = sub[(rho > 1.0) & (outer_ell.normalized_rho(xs, ys) <= 1.0)]
        if inner.size == 0 or outer.size == 0:
            return float(np.median(sub))
        return 0.5 * (float(np.median(inner)) + float(np.median(outer)))

    def threshold_for_image(self):
        """Threshold when no ellipse is known: midway between the 5th and 95th percentiles."""
        if self.cfg.N != "auto":
            return float(self.cfg.N)
        lo, hi = np.percentile(self.image, [5, 95])
        return 0.5 * float(lo + hi)

    def terms(self, ellipses, threshold, with_area=False):
        """Per-ellipse counts: dark inside, dark in the outer ring, edges near the contour.

        With ``with_area`` the pixel count inside each ellipse is appended.
        """
        rows = np.array([e.as_row() if isinstance(e, Ellipse) else e for e in ellipses],
                        dtype=float).reshape(-1, 5)
        delta = self.cfg.delta
        outer = rows.copy()
        outer[:, 2:4] += delta
        iris = self._iris_prefix(threshold)
        inside = _kernels.ellipse_counts(iris, rows)
        ring = _kernels.ellipse_counts(iris, outer) - inside
        if self._edge_prefix is None:
            edge = np.zeros(len(rows), dtype=np.int64)
        elif self.cfg.edge_term == "center":
            disk = np.column_stack([rows[:, 0], rows[:, 1], np.full(len(rows), delta),
                                    np.full(len(rows), delta), np.zeros(len(rows))])
            edge = _kernels.ellipse_counts(self._edge_prefix, disk)
        else:
            inner = rows.copy()
            inner[:, 2:4] -= delta
            edge = _kernels.ellipse_counts(self._edge_prefix, outer) - _kernels.ellipse_counts(
                self._edge_prefix, inner)
        if not with_area:
            return inside, ring, edge
        if self._ones_prefix is None:
            self._ones_prefix = _prefix(np.ones(self.image.shape, dtype=bool))
        return inside, ring, edge, _kernels.ellipse_counts(self._ones_prefix, rows)

    def scores(self, ellipses, threshold):
        inside, ring, edge = self.terms(ellipses, threshold)
        return self.cfg.A * inside / np.maximum(ring, 1) + self.cfg.B * edge

    def confidence(self, ellipse, threshold=None):
        """Both score terms scaled to [0, 1] and mixed with weights A and B.

        Region: share of dark pixels inside times share of light pixels in
        the outer ring. Edge: edge pixels near the contour over two per
        contour pixel.
        """
        if threshold is None:
            threshold = self.threshold_for(ellipse)
        inside, ring, edge, area = self.terms([ellipse], threshold, with_area=True)
        grown = np.array([ellipse.grown(self.cfg.delta).as_row()])
        outer_area = _kernels.ellipse_counts(self._ones_prefix, grown)
        ring_area = float(outer_area[0] - area[0])
        region = (inside[0] / max(float(area[0]), 1.0)) * (1.0 - ring[0] / max(ring_area, 1.0))
        edges = min(1.0, edge[0] / (2.0 * _perimeter(ellipse.r_max, ellipse.r_min)))
        total = self.cfg.A + self.cfg.B
        if total <= 0:
            return 0.0
        return float(np.clip((self.cfg.A * region + self.cfg.B * edges) / total, 0.0, 1.0))


def _prefix(mask):
    h, w = mask.shape
    out = np.zeros((h, w + 1), dtype=np.int64)
    np.cumsum(mask, axis=1, out=out[:, 1:])
    return out


def score_candidate(image, p, edges, cfg=HoughConfig()):
    """A * (dark inside p) / (dark in the delta-ring outside p) + B * (edges within delta of p).

    The ring count is clamped to at least 1.
    """
    ctx = ScoringContext(image, edges, cfg)
    return float(ctx.scores([p], ctx.threshold_for(p))[0])


def _sampson_distance(params, pts):
    cx, cy, big, small, phi = params
    c, s = math.cos(phi), math.sin(phi)
    dx = pts[:, 0] - cx
    dy = pts[:, 1] - cy
    a = dx * c + dy * s
    b = dy * c - dx * s
    ib, is_ = 1.0 / (big * big), 1.0 / (small * small)
    f = a * a * ib + b * b * is_ - 1.0
    grad = 2.0 * np.sqrt((a * ib) ** 2 + (b * is_) ** 2)
    return f / np.maximum(grad, 1e-12)


def refine_ellipse(ellipse, edges, bands=(6.0, 3.0, 1.5), min_points=20):
    """Robust least-squares fit of an ellipse to the edge points near ``ellipse``.

    Points are weighted by gradient magnitude; the inclusion band shrinks each
    pass. Returns None when too few points support the fit.
    """
    if len(edges) < min_points:
        return None
    pts = edges.points
    wts = np.sqrt(edges.magnitudes / edges.magnitudes.max())
    params = np.array(ellipse.as_row(), dtype=float)
    for band in bands:
        d = _sampson_distance(params, pts)
        sel = np.abs(d) <= band
        if sel.sum() < min_points:
            return None
        p_sel, w_sel = pts[sel], wts[sel]

        def resid(x, p_sel=p_sel, w_sel=w_sel):
            return w_sel * _sampson_distance(x, p_sel)

        res = least_squares(resid, params, loss="soft_l1", f_scale=0.5, x_scale="jac",
                            method="trf", max_nfev=200)
        params = res.x
        if not np.all(np.isfinite(params)) or params[2] <= 0 or params[3] <= 0:
            return None
    cx, cy, big, small, phi = (float(v) for v in params)
    big, small = abs(big), abs(small)
    if small > big:
        big, small = small, big
        phi += math.pi / 2
    # keep the orientation on the same branch as the starting ellipse
    k = round((ellipse.phi - phi) / math.pi)
    phi += k * math.pi
    return Ellipse(big, small, (cx, cy), phi)


def refinement_ok(ctx, original, refined, threshold):
    """Accept a refined contour unless it lost most of the edge or dark-pixel support.

    The region ratio alone is not used: a few noisy dark pixels just outside
    an exact contour can cut it by an order of magnitude.
    """
    inside, _, edge = ctx.terms([original, refined], threshold)
    return edge[1] >= 0.5 * edge[0] and inside[1] >= 0.8 * inside[0]


def fit_limbus(image, depth_mm, cam, eye=DEFAULT_EYE, cfg=HoughConfig(), rng_seed=None):
    """Detect the limbus in a cropped eye image.

    Hough candidates around the expected radius are ranked by the region/edge
    score; the best one is then refined on nearby edges. Deterministic for a
    given ``rng_seed`` (defaults to ``cfg.seed``).
    """
    img = _as_gray(image)
    h, w = img.shape
    seed = cfg.seed if rng_seed is None else rng_seed
    radii = radius_candidates(depth_mm, cam, eye, cfg)
    centers = center_candidates(ImagePoint((w - 1) / 2.0, (h - 1) / 2.0), cfg, seed)
    edges = detect_edges(img, cfg.edge_threshold)
    if len(edges) == 0:
        raise NoEllipseFound("image has no edges")
    cands = hough_candidates(edges, radii, centers, cfg)
    ctx = ScoringContext(img, edges, cfg)
    threshold = ctx.threshold_for(cands[0])
    scores = ctx.scores(cands, threshold)
    best = int(np.argmax(scores))
    chosen, chosen_score = cands[best], float(scores[best])

    if cfg.refine:
        refined = refine_ellipse(chosen, edges)
        if refined is not None and refined.inside_image(w, h):
            if refinement_ok(ctx, chosen, refined, threshold):
                chosen, chosen_score = refined, float(ctx.scores([refined], threshold)[0])

    return ScoredEllipse(chosen, chosen_score, threshold, ctx.confidence(chosen, threshold))

