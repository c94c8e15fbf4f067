"""Planar geometry shared by the simulator, scenario builder and featurizer.

Points and vectors are plain ``numpy`` arrays of shape ``(2,)``. Angles are in
radians and wrapped to ``(-pi, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DET_EPS = 1e-12
PARALLEL_TOL = 1e-6
MIN_SEGMENT = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate or malformed geometric input."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = math.hypot(v[0], v[1])
    if n < MIN_SEGMENT:
        raise GeometryError("cannot normalise a zero-length vector")
    return v / n


def heading_vector(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def rotate(v: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    v = np.asarray(v, dtype=float)
    return np.array([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]]).T


def signed_angle(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle that rotates ``a`` onto ``b``; positive counter-clockwise."""
    cross = a[0] * b[1] - a[1] * b[0]
    dot = a[0] * b[0] + a[1] * b[1]
    ang = math.atan2(cross, dot)
    # atan2 returns -pi for the antipodal case with a -0.0 cross term
    return math.pi if ang == -math.pi else ang


def subtended_angle(end_a: Sequence[float], center: Sequence[float], end_b: Sequence[float]) -> float:
    """Interior angle at ``center`` between the rays to ``end_a`` and ``end_b``."""
    ax, ay = end_a[0] - center[0], end_a[1] - center[1]
    bx, by = end_b[0] - center[0], end_b[1] - center[1]
    if math.hypot(ax, ay) < MIN_SEGMENT or math.hypot(bx, by) < MIN_SEGMENT:
        raise GeometryError("subtended angle undefined: end point coincides with centre")
    return abs(math.atan2(ax * by - ay * bx, ax * bx + ay * by))


@dataclass(frozen=True)
class Polyline:
    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError("polyline needs at least two 2D points")
        gaps = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(gaps <= MIN_SEGMENT):
            raise GeometryError("polyline has coincident consecutive points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def segments(self) -> np.ndarray:
        """Segments as an ``(n, 4)`` array of ``x0, y0, x1, y1``."""
        p = self.points
        if self.closed:
            q = np.roll(p, -1, axis=0)
        else:
            p, q = p[:-1], p[1:]
        return np.hstack([p, q])

    def length(self) -> float:
        s = self.segments()
        return float(np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1]).sum())

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self.points, other.points)

    __hash__ = None


def stack_segments(boundaries: Iterable[Polyline]) -> np.ndarray:
    segs = [b.segments() for b in boundaries]
    if not segs:
        return np.zeros((0, 4))
    return np.vstack(segs)


@dataclass(frozen=True)
class CircleEstimate:
    """Result of a chord-bisector circle fit. ``radius`` is ``inf`` when straight."""

    center: np.ndarray | None = None
    radius: float = math.inf
    straight: bool = field(default=False)

    @classmethod
    def line(cls) -> "CircleEstimate":
        return cls(None, math.inf, True)


def raycast_many(origins: np.ndarray, directions: np.ndarray, segments: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each ray to the nearest segment, clipped to ``max_range``.

    ``origins`` and ``directions`` are ``(k, 2)``; ``segments`` is ``(n, 4)``.
    Hits exactly at a segment end point count.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    k = len(origins)
    if len(segments) == 0:
        return np.full(k, float(max_range))
    ax, ay = segments[:, 0], segments[:, 1]
    ex, ey = segments[:, 2] - ax, segments[:, 3] - ay
    dx, dy = directions[:, 0:1], directions[:, 1:2]
    # origin + t*d = a + u*e  ->  solve for t, u
    det = ex * dy - dx * ey
    wx = ax - origins[:, 0:1]
    wy = ay - origins[:, 1:2]
    ok = np.abs(det) > DET_EPS
    safe = np.where(ok, det, 1.0)
    t = (ex * wy - ey * wx) / safe
    u = (dx * wy - dy * wx) / safe
    hit = ok & (t >= 0.0) & (u >= -DET_EPS) & (u <= 1.0 + DET_EPS)
    t = np.where(hit, t, np.inf)
    return np.minimum(t.min(axis=1), max_range)


def raycast(origin, direction, boundaries: Iterable[Polyline] | np.ndarray, max_range: float) -> float:
    segs = boundaries if isinstance(boundaries, np.ndarray) else stack_segments(boundaries)
    return float(raycast_many(np.asarray(origin, float)[None], np.asarray(direction, float)[None], segs, max_range)[0])


def point_segment_distance(p: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from each point in ``p`` (``(m, 2)``) to every segment, shape ``(m, n)``."""
    p = np.atleast_2d(p)
    ax, ay = segments[:, 0], segments[:, 1]
    ex, ey = segments[:, 2] - ax, segments[:, 3] - ay
    ll = ex * ex + ey * ey
    px = p[:, 0:1] - ax
    py = p[:, 1:2] - ay
    t = np.clip((px * ex + py * ey) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
    return np.hypot(px - t * ex, py - t * ey)


def _bisector(p: np.ndarray, q: np.ndarray):
    mid = 0.5 * (p + q)
    d = q - p
    n = math.hypot(d[0], d[1])
    if n < MIN_SEGMENT:
        raise GeometryError("chord of zero length")
    return mid, np.array([-d[1], d[0]]) / n


def fit_circle_from_chords(points: Sequence[Sequence[float]], chord_step: int = 5) -> CircleEstimate:
    """Estimate the radius of a path from two adjacent chords.

    The chords join points ``0 -> chord_step`` and ``chord_step -> 2*chord_step``;
    their perpendicular bisectors meet at the circle centre.
    """
    pts = np.asarray(points, dtype=float)
    if chord_step < 1 or len(pts) < 2 * chord_step + 1:
        raise GeometryError(f"need at least {2 * chord_step + 1} points for chord_step={chord_step}")
    p0, p1, p2 = pts[0], pts[chord_step], pts[2 * chord_step]
    m1, n1 = _bisector(p0, p1)
    m2, n2 = _bisector(p1, p2)
    cross = n1[0] * n2[1] - n1[1] * n2[0]
    if abs(math.atan2(cross, n1 @ n2)) < PARALLEL_TOL or abs(cross) < DET_EPS:
        return CircleEstimate.line()
    w = m2 - m1
    s = (w[0] * n2[1] - w[1] * n2[0]) / cross
    center = m1 + s * n1
    return CircleEstimate(center, float(math.hypot(*(p1 - center))), False)


def circle_polyline(center: Sequence[float], radius: float, max_chord_error: float,
                    start: float = 0.0, sweep: float = 2 * math.pi) -> np.ndarray:
    """Sample an arc so that no chord deviates from the arc by more than ``max_chord_error``."""
    if radius <= max_chord_error:
        n = 8
    else:
        step = 2.0 * math.acos(1.0 - max_chord_error / radius)
        n = max(1, math.ceil(abs(sweep) / step))
    full = math.isclose(abs(sweep), 2 * math.pi)
    ts = start + sweep * np.arange(n if full else n + 1) / n
    return np.column_stack([center[0] + radius * np.cos(ts), center[1] + radius * np.sin(ts)])
