"""2D geometry: point/segment and point/polyline distances, convex clipping."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from . import _kernels


class NonConvexClipError(ValueError):
    """The clip polygon passed to ``clip_polygon`` is not convex."""


def point_segment_distance(x, a, b) -> float:
    """Euclidean distance from point ``x`` to the segment ``a``-``b``.

    With ``z = (x - a).(b - a) / |b - a|^2`` the distance is measured to
    ``a`` when ``z <= 0``, to ``b`` when ``z >= 1`` and to the foot of the
    perpendicular ``a + z (b - a)`` otherwise. A degenerate segment is a point.
    """
    ax_, ay_ = float(a[0]), float(a[1])
    bx_, by_ = float(b[0]), float(b[1])
    # canonical endpoint order makes d(x, ab) == d(x, ba) bit for bit
    if (bx_, by_) < (ax_, ay_):
        ax_, ay_, bx_, by_ = bx_, by_, ax_, ay_
    px, py = float(x[0]), float(x[1])
    dx, dy = bx_ - ax_, by_ - ay_
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax_, py - ay_)
    z = ((px - ax_) * dx + (py - ay_) * dy) / den
    if z <= 0.0:
        return math.hypot(px - ax_, py - ay_)
    if z >= 1.0:
        return math.hypot(px - bx_, py - by_)
    return math.hypot(px - (ax_ + z * dx), py - (ay_ + z * dy))


def segment_distances(x, a, b) -> np.ndarray:
    """Vectorized ``point_segment_distance`` over ``(N, 2)`` arrays."""
    return _kernels.segment_distance(x, a, b)


def pack_pieces(pieces: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate polyline pieces into one array with NaN separator rows."""
    chunks = []
    sep = np.full((1, 2), np.nan)
    for p in pieces:
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            continue
        if chunks:
            chunks.append(sep)
        chunks.append(p)
    if not chunks:
        return np.empty((0, 2))
    return np.concatenate(chunks)


def points_polyline_distances(points, pieces: Sequence[np.ndarray]) -> np.ndarray:
    """Distance from each of ``points`` to the nearest segment of ``pieces``.

    Returns ``inf`` for every point when ``pieces`` holds no vertex.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    verts = pack_pieces(pieces)
    n = len(pts)
    starts = np.zeros(n, dtype=np.int64)
    ends = np.full(n, len(verts), dtype=np.int64)
    dist, _ = _kernels.polyline_offsets(pts, starts, ends, verts)
    return dist


def point_polyline_distance(x, pieces: Sequence[np.ndarray]) -> Optional[float]:
    """Minimum distance from ``x`` to any segment of any piece.

    A single-vertex piece contributes its point distance. Returns None when
    there is no vertex at all (the distance is undefined).
    """
    d = points_polyline_distances(np.asarray(x, dtype=float)[None, :], pieces)[0]
    if not np.isfinite(d):
        return None
    return float(d)


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------


def signed_area(p) -> float:
    p = np.asarray(p, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(p) -> float:
    """Shoelace area; fewer than three vertices give 0."""
    return abs(signed_area(p))


def is_convex(p, tol: float = 1e-12) -> bool:
    p = np.asarray(p, dtype=float)
    n = len(p)
    if n < 3:
        return False
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = max(1.0, float(np.max(np.abs(p)))) ** 2
    if np.all(cross >= -tol * scale) or np.all(cross <= tol * scale):
        # reject self-intersecting "star" shapes whose turns agree in sign
        winding = np.sum(np.arctan2(cross, np.einsum("ij,ij->i", e, np.roll(e, -1, axis=0))))
        return abs(abs(winding) - 2 * math.pi) < 1e-6
    return False


def is_simple(p) -> bool:
    """True when no two non-adjacent edges of the closed polygon intersect."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            c, d = p[j], p[(j + 1) % n]
            if _segments_intersect(a, b, c, d):
                return False
    return True


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_intersect(a, b, c, d) -> bool:
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def clip_halfplane(subject, coeffs) -> np.ndarray:
    """Keep the part of ``subject`` where ``a x + b y + c >= 0``."""
    poly = np.asarray(subject, dtype=float)
    if len(poly) == 0:
        return poly.reshape(0, 2)
    a, b, c = coeffs
    s = poly[:, 0] * a + poly[:, 1] * b + c
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        cur, nxt = poly[i], poly[j]
        si, sj = s[i], s[j]
        if si >= 0:
            out.append(cur)
        if (si >= 0) != (sj >= 0):
            t = si / (si - sj)
            out.append(cur + t * (nxt - cur))
    return np.asarray(out, dtype=float).reshape(-1, 2)


def clip_polygon(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman: the part of ``subject`` inside convex ``clip``.

    ``clip`` may be given in either orientation. Returns an ``(k, 2)`` array,
    empty when the polygons do not overlap.
    """
    clip = np.asarray(clip, dtype=float)
    if not is_convex(clip):
        raise NonConvexClipError("clip polygon must be convex")
    if signed_area(clip) < 0:
        clip = clip[::-1]
    out = np.asarray(subject, dtype=float)
    n = len(clip)
    for i in range(n):
        p, q = clip[i], clip[(i + 1) % n]
        # inside = left of the directed edge p -> q
        a = -(q[1] - p[1])
        b = q[0] - p[0]
        c = -(a * p[0] + b * p[1])
        out = clip_halfplane(out, (a, b, c))
        if len(out) == 0:
            break
    return out


def polygon_iou(p, q) -> float:
    """Intersection over union of two convex polygons."""
    ap, aq = polygon_area(p), polygon_area(q)
    if ap == 0.0 and aq == 0.0:
        return 0.0
    inter = polygon_area(clip_polygon(p, q)) if ap > 0 and aq > 0 else 0.0
    union = ap + aq - inter
    if union <= 0.0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))
