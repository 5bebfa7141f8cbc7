"""Ellipse primitive, orientation codec, and elliptical intersection-over-union.

Angles are in degrees. Image coordinates are used throughout: x to the
right, y down, and an ellipse with orientation ``theta`` has its semi-major
axis along the direction ``(cos theta, sin theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from fringedet.errors import DegenerateAngle, InvalidEllipse


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def normalized(self) -> "Ellipse":
        return normalize(self)

    def half_extents(self) -> tuple[float, float]:
        """Half-width and half-height of the axis-aligned bounding box."""
        t = math.radians(self.theta)
        c, s = math.cos(t), math.sin(t)
        hx = math.sqrt((self.a * c) ** 2 + (self.b * s) ** 2)
        hy = math.sqrt((self.a * s) ** 2 + (self.b * c) ** 2)
        return hx, hy

    def contains(self, x, y):
        """Vectorized point-in-ellipse test (boundary included)."""
        return _rho_squared(self, np.asarray(x, float), np.asarray(y, float)) <= 1.0


def _wrap180(theta: float) -> float:
    t = math.fmod(theta, 180.0)
    if t < 0:
        t += 180.0
    # fmod can return 180.0 - tiny for tiny negative inputs
    if t >= 180.0:
        t -= 180.0
    return t


def normalize(e: Ellipse) -> Ellipse:
    """Return the equivalent ellipse with ``a >= b`` and ``theta`` in [0, 180)."""
    if not (e.a > 0 and e.b > 0):
        raise InvalidEllipse(f"semi-axes must be positive, got a={e.a}, b={e.b}")
    if e.a >= e.b:
        return replace(e, theta=_wrap180(e.theta))
    return replace(e, a=e.b, b=e.a, theta=_wrap180(e.theta + 90.0))


def angle_encode(theta):
    """Map orientation (degrees) to ``(cos 2theta, sin 2theta)``."""
    t2 = np.radians(np.asarray(theta, dtype=float)) * 2.0
    c, s = np.cos(t2), np.sin(t2)
    if np.ndim(c) == 0:
        return float(c), float(s)
    return c, s


def angle_decode(c: float, s: float) -> float:
    """Inverse of :func:`angle_encode`; result in [0, 180)."""
    if c == 0 and s == 0:
        raise DegenerateAngle("cannot recover an orientation from the zero vector")
    return _wrap180(0.5 * math.degrees(math.atan2(s, c)))


def area(e: Ellipse) -> float:
    return math.pi * e.a * e.b


def ecc_squared(a: float, b: float) -> float:
    """``1 - b**2 / a**2`` without reordering the axes; negative when b > a."""
    if a == 0:
        raise InvalidEllipse("semi-major axis is zero")
    return 1.0 - (b * b) / (a * a)


def _rho_squared(e: Ellipse, x, y):
    t = math.radians(e.theta)
    c, s = math.cos(t), math.sin(t)
    dx, dy = x - e.cx, y - e.cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / e.a) ** 2 + (v / e.b) ** 2


def _quadratic_form(e: Ellipse):
    t = math.radians(e.theta)
    c, s = math.cos(t), math.sin(t)
    ia, ib = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    qa = c * c * ia + s * s * ib
    qb = c * s * (ia - ib)
    qc = s * s * ia + c * c * ib
    return qa, qb, qc


def _chords(e: Ellipse, ys: np.ndarray):
    """x-interval [lo, hi] of the ellipse on each horizontal line y; empty -> lo > hi."""
    qa, qb, qc = _quadratic_form(e)
    dy = ys - e.cy
    disc = (qb * dy) ** 2 - qa * (qc * dy * dy - 1.0)
    root = np.sqrt(np.clip(disc, 0.0, None))
    lo = e.cx + (-qb * dy - root) / qa
    hi = e.cx + (-qb * dy + root) / qa
    empty = disc <= 0
    lo = np.where(empty, np.inf, lo)
    hi = np.where(empty, -np.inf, hi)
    return lo, hi


def intersection_area(e1: Ellipse, e2: Ellipse, n_lines: int | None = None) -> float:
    """Area of overlap, integrated over horizontal scanlines with exact chords.

    Each scanline contributes the length of the intersection of the two
    ellipses' chords; scanlines are midpoint samples across the overlapping
    y-range, so the error shrinks with the line count independent of pixels.
    """
    _, hy1 = e1.half_extents()
    _, hy2 = e2.half_extents()
    y0 = max(e1.cy - hy1, e2.cy - hy2)
    y1 = min(e1.cy + hy1, e2.cy + hy2)
    if y1 <= y0:
        return 0.0
    hx1, _ = e1.half_extents()
    hx2, _ = e2.half_extents()
    if max(e1.cx - hx1, e2.cx - hx2) >= min(e1.cx + hx1, e2.cx + hx2):
        return 0.0
    if n_lines is None:
        # finer sampling when the overlap band is tall relative to the thinnest axis
        ratio = (y1 - y0) / max(min(e1.b, e2.b), 1e-12)
        n_lines = int(min(20000, max(2000, 400 * ratio)))
    h = (y1 - y0) / n_lines
    ys = y0 + h * (np.arange(n_lines) + 0.5)
    lo1, hi1 = _chords(e1, ys)
    lo2, hi2 = _chords(e2, ys)
    width = np.clip(np.minimum(hi1, hi2) - np.maximum(lo1, lo2), 0.0, None)
    return float(width.sum() * h)


def ellipse_iou(e1: Ellipse, e2: Ellipse) -> float:
    """Intersection over union of two filled ellipses, in [0, 1]."""
    e1 = _abs_axes(e1)
    e2 = _abs_axes(e2)
    if e1 == e2:
        return 1.0
    inter = intersection_area(e1, e2)
    a1, a2 = area(e1), area(e2)
    inter = min(inter, a1, a2)
    union = a1 + a2 - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def _abs_axes(e: Ellipse) -> Ellipse:
    # raw network predictions may carry a negative or swapped axis
    a, b = abs(e.a), abs(e.b)
    if a == 0 or b == 0:
        raise InvalidEllipse(f"zero-area ellipse: a={e.a}, b={e.b}")
    if a == e.a and b == e.b:
        return e
    return replace(e, a=a, b=b)


def ellipse_outline(e: Ellipse, n: int = 90) -> np.ndarray:
    """``(n, 2)`` array of boundary points, for drawing."""
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    th = math.radians(e.theta)
    c, s = math.cos(th), math.sin(th)
    u, v = e.a * np.cos(t), e.b * np.sin(t)
    return np.stack([e.cx + u * c - v * s, e.cy + u * s + v * c], axis=1)


def ellipse_mask(e: Ellipse, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` mask of pixel centers inside ``e``."""
    yy, xx = np.mgrid[0:height, 0:width]
    return _rho_squared(e, xx.astype(float), yy.astype(float)) <= 1.0
