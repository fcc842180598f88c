"""Synthetic eye images with known ground truth.

A flat dark iris disk (the projected limbus ellipse) on a bright sclera, with
optional anti-aliasing, additive Gaussian noise and an upper-eyelid occluder.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import DEFAULT_EYE, project_limbus


@dataclass(frozen=True)
class RenderStyle:
    iris: float = 60.0
    sclera: float = 200.0
    antialias: bool = True
    supersample: int = 4
    noise_sigma: float = 0.0
    eyelid: float = 0.0  # fraction of the iris height hidden from the top
    skin: float = 150.0
    seed: int = 0


def render_ellipse(ellipse, width, height, style=RenderStyle(), rng=None):
    """Render ``ellipse`` into a (height, width) uint8 image."""
    if width <= 0 or height <= 0:
        raise GeometryError("image must have positive size")
    if not ellipse.inside_image(width, height):
        raise GeometryError("projected ellipse does not fit inside the image")

    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    rho = ellipse.normalized_rho(xs, ys)
    cover = (rho <= 1.0).astype(float)

    if style.antialias and style.supersample > 1:
        # only pixels within ~1.5 px of the contour can be partially covered
        band = np.abs(rho - 1.0) * ellipse.r_min < 1.5
        by, bx = np.nonzero(band)
        k = style.supersample
        offs = (np.arange(k) + 0.5) / k - 0.5
        oy, ox = np.meshgrid(offs, offs, indexing="ij")
        sx = bx[:, None] + ox.ravel()[None, :]
        sy = by[:, None] + oy.ravel()[None, :]
        cover[by, bx] = (ellipse.normalized_rho(sx, sy) <= 1.0).mean(axis=1)

    img = style.sclera + (style.iris - style.sclera) * cover

    if style.eyelid > 0:
        _, hh = ellipse.half_extent()
        top = ellipse.y - hh + 2.0 * hh * style.eyelid
        # arched lid: lowest over the iris center, rising toward the corners
        lid = top - 0.5 * ((xs[0] - ellipse.x) / max(ellipse.r_max, 1.0)) ** 2 * hh
        img = np.where(ys < lid[None, :], style.skin, img)

    if style.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(style.seed)
        img = img + rng.normal(0.0, style.noise_sigma, img.shape)

    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_eye_image(pose, cam, eye=DEFAULT_EYE, style=RenderStyle(), rng=None):
    """Render the eye at ``pose`` as seen by ``cam``.

    Returns the image; the ground-truth ellipse is ``project_limbus(pose, cam, eye)``.
    """
    ellipse = project_limbus(pose, cam, eye)
    return render_ellipse(ellipse, cam.width, cam.height, style, rng)


def blank_image(cam, value=200):
    return np.full((cam.height, cam.width), value, dtype=np.uint8)


def rgb_from_gray(img):
    img = np.asarray(img, dtype=np.uint8)
    return np.repeat(img[:, :, None], 3, axis=2)


def gray_from_rgb(img):
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    # ITU-R BT.601 luma
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def draw_overlay(image, ellipse=None, grp=None, marker=9):
    """RGB copy of ``image`` with the ellipse outline and a square GRP marker.

    The input array is never modified.
    """
    base = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    out = rgb_from_gray(base) if base.ndim == 2 else base.copy()
    h, w = out.shape[:2]
    if ellipse is not None:
        n = max(64, int(2 * math.pi * ellipse.r_max * 2))
        pts = np.rint(ellipse.boundary(n)).astype(int)
        ok = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
        out[pts[ok, 1], pts[ok, 0]] = (0, 255, 0)
    if grp is not None:
        half = marker // 2
        gx, gy = int(round(grp.x)), int(round(grp.y))
        x0, x1 = max(gx - half, 0), min(gx + half, w - 1)
        y0, y1 = max(gy - half, 0), min(gy + half, h - 1)
        if x0 <= x1 and y0 <= y1:
            yellow = (255, 255, 0)
            if gy - half >= 0:
                out[gy - half, x0:x1 + 1] = yellow
            if gy + half < h:
                out[gy + half, x0:x1 + 1] = yellow
            if gx - half >= 0:
                out[y0:y1 + 1, gx - half] = yellow
            if gx + half < w:
                out[y0:y1 + 1, gx + half] = yellow
    return out
