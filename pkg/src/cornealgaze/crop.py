"""Locate the eye region in a wide frame by normalized cross-correlation."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import CropNotFound, GeometryError
from .render import gray_from_rgb


@dataclass(frozen=True)
class CropRect:
    x0: int
    y0: int
    width: int
    height: int
    score: float

    def slice(self, image):
        return image[self.y0:self.y0 + self.height, self.x0:self.x0 + self.width]


def ncc_map(template, frame):
    """NCC of ``template`` at every fully-overlapping offset; shape (H-h+1, W-w+1).

    Windows with zero variance score 0.
    """
    t = gray_from_rgb(template).astype(float)
    f = gray_from_rgb(frame).astype(float)
    h, w = t.shape
    if h > f.shape[0] or w > f.shape[1]:
        raise GeometryError("template must be smaller than the frame")
    t = t - t.mean()
    t_norm = np.sqrt(np.sum(t * t))
    numer = fftconvolve(f, t[::-1, ::-1], mode="valid")

    # window sums from integral images
    def window_sum(a):
        c = np.pad(a, ((1, 0), (1, 0))).cumsum(0).cumsum(1)
        return c[h:, w:] - c[:-h, w:] - c[h:, :-w] + c[:-h, :-w]

    n = h * w
    s1 = window_sum(f)
    s2 = window_sum(f * f)
    var = np.maximum(s2 - s1 * s1 / n, 0.0)
    denom = t_norm * np.sqrt(var)
    # fft round-off leaves tiny residues where the true numerator is 0
    tol = 1e-9 * max(float(np.abs(f).max()) ** 2 * n, 1.0)
    out = np.zeros_like(numer)
    ok = denom > tol
    out[ok] = numer[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def crop_eye_ncc(template, frame, margin=0, threshold=0.5):
    """Best template match, grown by ``margin`` px on each side and clipped to the frame."""
    scores = ncc_map(template, frame)
    iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
    peak = float(scores[iy, ix])
    if not peak >= threshold:
        raise CropNotFound(f"NCC peak {peak:.3f} below threshold {threshold}")
    h, w = np.asarray(template).shape[:2]
    fh, fw = np.asarray(frame).shape[:2]
    x0, y0 = max(int(ix) - margin, 0), max(int(iy) - margin, 0)
    x1, y1 = min(int(ix) + w + margin, fw), min(int(iy) + h + margin, fh)
    return CropRect(x0, y0, x1 - x0, y1 - y0, peak)
