"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports, otherwise the fallback.
``set_backend`` switches explicitly (tests and benchmarks use it).
"""

import logging

from . import _reference

log = logging.getLogger(__name__)

_compiled = None
try:
    from . import _fast as _compiled
except ImportError:
    log.debug("compiled kernels unavailable, using numpy fallback")

BACKEND = None
hough_vote = None
ellipse_counts = None

__all__ = ["BACKEND", "hough_vote", "ellipse_counts", "available_backends", "set_backend"]


def available_backends():
    """Map backend name to its kernel module."""
    out = {"python": _reference}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def set_backend(name):
    """Route the kernels to ``"compiled"`` or ``"python"``; returns the previous name."""
    global BACKEND, hough_vote, ellipse_counts
    mods = available_backends()
    if name not in mods:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(mods)}")
    previous = BACKEND
    BACKEND = name
    hough_vote = mods[name].hough_vote
    ellipse_counts = mods[name].ellipse_counts
    return previous


set_backend("compiled" if _compiled is not None else "python")
