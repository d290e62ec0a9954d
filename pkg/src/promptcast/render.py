"""Line-plot rasterization of a context window.

The image is a bare polyline: no axes or labels. Values are min-max scaled
into the vertical band ``[margin, height - 1 - margin]`` (large values at the
top), x positions are evenly spaced across the same horizontal band, and
consecutive points are joined with Bresenham segments. Because of the
min-max step, ``render(a*x + b)`` equals ``render(x)`` for any ``a > 0``.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import InputError


@dataclass
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width), values in [0, 1]

    def to_pgm(self):
        body = np.clip(np.rint(self.pixels * 255), 0, 255).astype(np.uint8).tobytes()
        return f"P5\n{self.width} {self.height}\n255\n".encode() + body


def _round(v):
    return np.floor(v + 0.5).astype(np.int64)


def polyline_points(values, width, height, margin=2):
    """Integer pixel coordinates (x, y) for each sample; row 0 is the top."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    xs = _round(margin + np.arange(v.size) * (width - 1 - 2 * margin) / (v.size - 1))
    if hi == lo:
        ys = np.full(v.size, height // 2, dtype=np.int64)
    else:
        unit = (v - lo) / (hi - lo)
        ys = _round(margin + (1.0 - unit) * (height - 1 - 2 * margin))
    return xs, ys


def render_series(values, width=64, height=64, line_thickness=1, margin=2):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise InputError(f"need at least 2 values to draw a line, got {v.size}")
    if width < 16 or height < 16:
        raise InputError(f"image must be at least 16x16, got {width}x{height}")
    if not np.isfinite(v).all():
        raise InputError("cannot render non-finite values")
    if line_thickness < 1:
        raise InputError("line_thickness must be >= 1")
    xs, ys = polyline_points(v, width, height, margin)
    canvas = np.zeros((height, width))
    _accel.draw_polyline(canvas, xs, ys, int(line_thickness))
    return RasterImage(width, height, canvas)


def render_batch(contexts, width=64, height=64, line_thickness=1, margin=2):
    """Stack of pixel arrays, shape ``(B, height, width)``."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    out = np.empty((contexts.shape[0], height, width))
    for i, row in enumerate(contexts):
        out[i] = render_series(row, width, height, line_thickness, margin).pixels
    return out


def write_pgm(image, path):
    with open(path, "wb") as fh:
        fh.write(image.to_pgm())
