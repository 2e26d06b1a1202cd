"""Hot inner loops: point-to-segment and point-to-polyline distances.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy
version with identical semantics. The numba path is used when numba imports
and ``PITCHCAL_DISABLE_NUMBA`` is unset (or "0"). Both paths stay importable
so tests can compare them directly.

Polylines are passed as one ``(M, 2)`` vertex array in which rows of NaN
separate pieces. A segment is usable iff both of its endpoints are finite. A
finite vertex whose neighbours are both non-finite acts as a single point.
"""

import os

import numpy as np

_FLAG = "PITCHCAL_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get(_FLAG, "0") in ("", "0")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _canonical(a, b):
    # order endpoints lexicographically so results do not depend on direction
    swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
    s = swap[:, None]
    return np.where(s, b, a), np.where(s, a, b)


def segment_distance_numpy(x, a, b):
    """Elementwise distance from points ``x`` to segments ``a``-``b``.

    All arguments are ``(N, 2)``; returns ``(N,)``.
    """
    x = np.asarray(x, dtype=np.float64)
    a, b = _canonical(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    ab = b - a
    ax = x - a
    den = np.einsum("ij,ij->i", ab, ab)
    num = np.einsum("ij,ij->i", ax, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
    foot = np.where(
        (z <= 0.0)[:, None], a, np.where((z >= 1.0)[:, None], b, a + z[:, None] * ab)
    )
    return np.hypot(x[:, 0] - foot[:, 0], x[:, 1] - foot[:, 1])


def _group_offsets_numpy(pts, verts):
    # pts (n, 2), verts (m, 2) with NaN separators -> dist (n,), offset (n, 2)
    n = pts.shape[0]
    dist = np.full(n, np.inf)
    off = np.full((n, 2), np.nan)
    if n == 0 or verts.shape[0] == 0:
        return dist, off
    finite = np.isfinite(verts).all(axis=1)
    m = verts.shape[0]
    prev_ok = np.zeros(m, dtype=bool)
    next_ok = np.zeros(m, dtype=bool)
    prev_ok[1:] = finite[:-1]
    next_ok[:-1] = finite[1:]
    seg_ok = finite[:-1] & finite[1:]
    a, b = _canonical(verts[:-1][seg_ok], verts[1:][seg_ok])
    lone = verts[finite & ~prev_ok & ~next_ok]
    if lone.shape[0]:
        a = np.concatenate([a, lone])
        b = np.concatenate([b, lone])
    if a.shape[0] == 0:
        return dist, off
    ab = b - a  # (s, 2)
    den = np.einsum("ij,ij->i", ab, ab)  # (s,)
    ax = pts[:, None, :] - a[None, :, :]  # (n, s, 2)
    num = np.einsum("nsk,sk->ns", ax, ab)
    safe = np.where(den > 0.0, den, 1.0)
    z = np.where(den > 0.0, num / safe, 0.0)
    z = np.clip(z, 0.0, 1.0)
    foot = a[None, :, :] + z[:, :, None] * ab[None, :, :]
    d = pts[:, None, :] - foot
    d2 = d[..., 0] ** 2 + d[..., 1] ** 2
    k = np.argmin(d2, axis=1)
    rows = np.arange(n)
    off = d[rows, k]
    dist = np.sqrt(d2[rows, k])
    return dist, off


def polyline_offsets_numpy(points, starts, ends, verts):
    """For each point ``i``, the nearest point on ``verts[starts[i]:ends[i]]``.

    Returns ``(dist, offset)`` where ``offset = point - nearest``. Points whose
    vertex range holds no usable geometry get ``inf`` and NaN offsets.
    """
    points = np.asarray(points, dtype=np.float64)
    verts = np.asarray(verts, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    n = points.shape[0]
    dist = np.full(n, np.inf)
    off = np.full((n, 2), np.nan)
    if n == 0:
        return dist, off
    keys = np.stack([starts, ends], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for g, (s, e) in enumerate(uniq):
        idx = np.nonzero(inverse == g)[0]
        d, o = _group_offsets_numpy(points[idx], verts[s:e])
        dist[idx] = d
        off[idx] = o
    return dist, off


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @numba.njit(cache=True, nogil=True)
    def _foot(px, py, ax, ay, bx, by):
        if bx < ax or (bx == ax and by < ay):
            ax, ay, bx, by = bx, by, ax, ay
        abx = bx - ax
        aby = by - ay
        den = abx * abx + aby * aby
        if den <= 0.0:
            return ax, ay
        z = ((px - ax) * abx + (py - ay) * aby) / den
        if z <= 0.0:
            return ax, ay
        if z >= 1.0:
            return bx, by
        return ax + z * abx, ay + z * aby

    @numba.njit(cache=True, nogil=True)
    def segment_distance_numba(x, a, b):
        n = x.shape[0]
        out = np.empty(n)
        for i in range(n):
            fx, fy = _foot(x[i, 0], x[i, 1], a[i, 0], a[i, 1], b[i, 0], b[i, 1])
            out[i] = np.hypot(x[i, 0] - fx, x[i, 1] - fy)
        return out

    @numba.njit(cache=True, nogil=True)
    def _polyline_offsets_numba(points, starts, ends, verts):
        n = points.shape[0]
        dist = np.full(n, np.inf)
        off = np.full((n, 2), np.nan)
        for i in range(n):
            px = points[i, 0]
            py = points[i, 1]
            best = np.inf
            bx_ = np.nan
            by_ = np.nan
            s = starts[i]
            e = ends[i]
            for j in range(s, e):
                vx = verts[j, 0]
                vy = verts[j, 1]
                if not (np.isfinite(vx) and np.isfinite(vy)):
                    continue
                nxt = j + 1 < e and np.isfinite(verts[j + 1, 0]) and np.isfinite(
                    verts[j + 1, 1]
                )
                if nxt:
                    fx, fy = _foot(px, py, vx, vy, verts[j + 1, 0], verts[j + 1, 1])
                else:
                    prv = j > s and np.isfinite(verts[j - 1, 0]) and np.isfinite(
                        verts[j - 1, 1]
                    )
                    if prv:
                        continue
                    fx, fy = vx, vy
                dx = px - fx
                dy = py - fy
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    bx_ = dx
                    by_ = dy
            if best < np.inf:
                dist[i] = np.sqrt(best)
                off[i, 0] = bx_
                off[i, 1] = by_
        return dist, off

    def polyline_offsets_numba(points, starts, ends, verts):
        return _polyline_offsets_numba(
            np.ascontiguousarray(points, dtype=np.float64),
            np.ascontiguousarray(starts, dtype=np.int64),
            np.ascontiguousarray(ends, dtype=np.int64),
            np.ascontiguousarray(verts, dtype=np.float64),
        )

    def _segment_distance_numba_wrapped(x, a, b):
        return segment_distance_numba(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
        )

else:  # pragma: no cover
    polyline_offsets_numba = None
    _segment_distance_numba_wrapped = None


if USE_NUMBA:
    segment_distance = _segment_distance_numba_wrapped
    polyline_offsets = polyline_offsets_numba
else:
    segment_distance = segment_distance_numpy
    polyline_offsets = polyline_offsets_numpy


def backend() -> str:
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
