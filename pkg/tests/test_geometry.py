import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pitchcal.geometry import (
    NonConvexClipError,
    clip_polygon,
    is_convex,
    pack_pieces,
    point_polyline_distance,
    point_segment_distance,
    points_polyline_distances,
    polygon_area,
    polygon_iou,
    segment_distances,
)

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
coord = st.floats(-100, 100, allow_nan=False)
point = st.tuples(coord, coord)


def brute_segment_distance(x, a, b, n=10_000):
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    return float(np.min(np.linalg.norm(pts - np.asarray(x), axis=1)))


@pytest.mark.parametrize(
    "x,expected",
    [((1.0, 1.0), 1.0), ((3.0, 0.0), 1.0), ((-3.0, 4.0), 5.0), ((2.0, 0.0), 0.0)],
)
def test_point_segment_examples(x, expected):
    assert point_segment_distance(x, (0.0, 0.0), (2.0, 0.0)) == pytest.approx(expected, abs=1e-15)


def test_degenerate_segment_is_a_point():
    assert point_segment_distance((3.0, 4.0), (0.0, 0.0), (0.0, 0.0)) == 5.0


def test_against_dense_sampling_oracle():
    rng = np.random.default_rng(0)
    x, a, b = (rng.uniform(-10, 10, (500, 2)) for _ in range(3))
    got = segment_distances(x, a, b)
    for i in range(len(x)):
        oracle = brute_segment_distance(x[i], a[i], b[i])
        # the oracle can only overshoot, by at most half a sample step
        step = np.linalg.norm(b[i] - a[i]) / 9_999
        assert got[i] <= oracle + 1e-12
        assert oracle - got[i] <= step / 2 + 1e-12


@given(point, point, point)
@settings(max_examples=300, deadline=None)
def test_orientation_symmetry(x, a, b):
    assert point_segment_distance(x, a, b) == point_segment_distance(x, b, a)


@given(point, point, st.floats(0, 1))
@settings(max_examples=300, deadline=None)
def test_zero_on_segment(a, b, t):
    x = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    assert point_segment_distance(x, a, b) <= 1e-12 * max(1.0, np.abs([*a, *b]).max())


@given(point, point, point, st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
@settings(max_examples=300, deadline=None)
def test_one_lipschitz(x, a, b, delta):
    y = (x[0] + delta[0], x[1] + delta[1])
    change = abs(point_segment_distance(x, a, b) - point_segment_distance(y, a, b))
    assert change <= np.hypot(*delta) + 1e-9


@given(point, point, point)
@settings(max_examples=300, deadline=None)
def test_scalar_and_vector_paths_agree(x, a, b):
    v = segment_distances(np.array([x]), np.array([a]), np.array([b]))[0]
    assert v == pytest.approx(point_segment_distance(x, a, b), rel=1e-12, abs=1e-9)


def test_polyline_examples():
    line = [np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])]
    assert point_polyline_distance((1.0, 0.0), line) == 0.0
    assert point_polyline_distance((1.5, 2.0), line) == pytest.approx(2.0)
    assert point_polyline_distance((0.0, 0.0), []) is None


def test_single_vertex_piece_is_a_point():
    assert point_polyline_distance((3.0, 4.0), [np.array([[0.0, 0.0]])]) == 5.0


@pytest.mark.parametrize("seed", range(10))
def test_polyline_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    pieces = [rng.uniform(-20, 20, (rng.integers(2, 8), 2)) for _ in range(rng.integers(1, 4))]
    pts = rng.uniform(-25, 25, (30, 2))
    got = points_polyline_distances(pts, pieces)
    for p, d in zip(pts, got):
        oracle = min(point_segment_distance(p, pc[i], pc[i + 1]) for pc in pieces for i in range(len(pc) - 1))
        assert d == pytest.approx(oracle, abs=1e-12)


def test_pack_pieces_separates_with_nan():
    packed = pack_pieces([np.zeros((2, 2)), np.ones((3, 2))])
    assert packed.shape == (6, 2) and np.isnan(packed[2]).all()


def test_clip_examples():
    assert polygon_area(clip_polygon(UNIT, UNIT)) == pytest.approx(1.0)
    assert polygon_area(clip_polygon(UNIT, UNIT + 0.5)) == pytest.approx(0.25)
    assert len(clip_polygon(UNIT, UNIT + 2.0)) == 0


def test_clip_accepts_clockwise_clip():
    assert polygon_area(clip_polygon(UNIT, (UNIT + 0.5)[::-1])) == pytest.approx(0.25)


def test_nonconvex_clip_rejected():
    dart = np.array([[0.0, 0.0], [2.0, 1.0], [0.0, 2.0], [0.5, 1.0]])
    with pytest.raises(NonConvexClipError):
        clip_polygon(UNIT, dart)
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert not is_convex(bowtie)


def random_convex(rng, n=7, center=(0.0, 0.0), scale=1.0):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    rad = scale * rng.uniform(0.5, 1.0, n)
    pts = np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])
    # convex hull via gift wrapping keeps the oracle independent of the clipper
    hull = []
    start = int(np.argmin(pts[:, 0]))
    cur = start
    while True:
        hull.append(pts[cur])
        nxt = (cur + 1) % n
        for j in range(n):
            o = (pts[nxt, 0] - pts[cur, 0]) * (pts[j, 1] - pts[cur, 1]) - (pts[nxt, 1] - pts[cur, 1]) * (pts[j, 0] - pts[cur, 0])
            if o < 0:
                nxt = j
        cur = nxt
        if cur == start:
            break
    return np.array(hull)


def inside_convex(pts, poly):
    # counterclockwise poly: inside iff left of every edge
    ok = np.ones(len(pts), dtype=bool)
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        ok &= (q[0] - p[0]) * (pts[:, 1] - p[1]) - (q[1] - p[1]) * (pts[:, 0] - p[0]) >= 0
    return ok


@pytest.mark.parametrize("seed", range(5))
def test_clip_area_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    p = random_convex(rng)
    q = random_convex(rng, center=rng.uniform(-0.7, 0.7, 2))
    n = 1_000_000
    samples = rng.uniform(-2.0, 2.0, (n, 2))
    frac = np.mean(inside_convex(samples, p) & inside_convex(samples, q))
    estimate = 16.0 * frac
    sigma = 16.0 * np.sqrt(frac * (1 - frac) / n)
    got = polygon_area(clip_polygon(p, q))
    assert abs(got - estimate) <= 3 * sigma + 1e-12


@pytest.mark.parametrize(
    "q,expected",
    [(UNIT, 1.0), (UNIT + 5.0, 0.0), (UNIT + [0.5, 0.0], 1.0 / 3.0)],
)
def test_iou_examples(q, expected):
    assert polygon_iou(UNIT, q) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_iou_bounds(seed):
    rng = np.random.default_rng(seed)
    p = random_convex(rng)
    q = random_convex(rng, center=rng.uniform(-1.5, 1.5, 2))
    assume(polygon_area(p) > 1e-6 and polygon_area(q) > 1e-6)
    v = polygon_iou(p, q)
    assert 0.0 <= v <= 1.0
    assert polygon_iou(p, p) == pytest.approx(1.0, abs=1e-12)


def test_area_of_degenerate_polygon_is_zero():
    assert polygon_area(np.array([[0.0, 0.0], [1.0, 1.0]])) == 0.0
