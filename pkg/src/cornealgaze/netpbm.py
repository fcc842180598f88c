"""Binary NetPBM (P5 grayscale, P6 RGB) with 8-bit samples."""

import numpy as np

from .errors import ParseError

_WS = b" \t\n\r\v\f"


def _token(data, pos):
    """Next header token and the position after it; skips whitespace and comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", start)
    return data[start:pos], start, pos


def _header_int(data, pos, what):
    tok, start, pos = _token(data, pos)
    if not tok.isdigit():
        raise ParseError(f"bad {what} {tok[:16]!r}", start)
    return int(tok), start, pos


def decode(data):
    """Parse P5/P6 bytes into a uint8 array of shape (h, w) or (h, w, 3)."""
    data = bytes(data)
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise ParseError(f"bad magic {data[:2]!r}, expected P5 or P6", 0)
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    if len(data) > pos and data[pos:pos + 1] not in _WS:
        raise ParseError("missing whitespace after magic", pos)
    width, start, pos = _header_int(data, pos, "width")
    if width == 0:
        raise ParseError("width must be positive", start)
    height, start, pos = _header_int(data, pos, "height")
    if height == 0:
        raise ParseError("height must be positive", start)
    maxval, start, pos = _header_int(data, pos, "maxval")
    if not 0 < maxval < 256:
        raise ParseError(f"maxval {maxval} unsupported, only 8-bit images are read", start)
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise ParseError("missing single whitespace before raster", pos)
    pos += 1
    expected = width * height * channels
    actual = len(data) - pos
    if actual < expected:
        raise ParseError(f"truncated raster: expected {expected} bytes, got {actual}", pos + actual)
    if actual > expected:
        raise ParseError(f"trailing data: expected {expected} bytes, got {actual}", pos + expected)
    raster = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return raster.reshape(shape).copy()


def encode(image):
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("only uint8 images can be written")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected (h, w) or (h, w, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]
    return magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_image(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_image(path, image):
    with open(path, "wb") as fh:
        fh.write(encode(image))
