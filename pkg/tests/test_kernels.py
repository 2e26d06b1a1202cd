import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pitchcal import _kernels

pytestmark = pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba missing")

coords = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, (20, 6), elements=coords))
@settings(max_examples=200, deadline=None)
def test_segment_distance_backends_agree(data):
    x, a, b = data[:, 0:2], data[:, 2:4], data[:, 4:6]
    np.testing.assert_allclose(
        _kernels.segment_distance_numba(x, a, b),
        _kernels.segment_distance_numpy(x, a, b),
        rtol=1e-12,
        atol=1e-9,
    )


def _random_layout(rng, n_pts=15, n_verts=40, nan_rate=0.2):
    verts = rng.uniform(-50, 50, (n_verts, 2))
    verts[rng.random(n_verts) < nan_rate] = np.nan
    pts = rng.uniform(-60, 60, (n_pts, 2))
    starts = rng.integers(0, n_verts // 2, n_pts)
    ends = starts + rng.integers(0, n_verts // 2, n_pts)
    return pts, starts, ends, verts


@pytest.mark.parametrize("seed", range(25))
def test_polyline_offsets_backends_agree(seed):
    args = _random_layout(np.random.default_rng(seed))
    d1, o1 = _kernels.polyline_offsets_numba(*args)
    d2, o2 = _kernels.polyline_offsets_numpy(*args)
    np.testing.assert_array_equal(np.isinf(d1), np.isinf(d2))
    fin = np.isfinite(d1)
    np.testing.assert_allclose(d1[fin], d2[fin], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(np.hypot(*o1[fin].T), d1[fin], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", ["numba", "numpy"])
def test_polyline_offsets_against_brute_force(impl):
    fn = getattr(_kernels, f"polyline_offsets_{impl}")
    rng = np.random.default_rng(3)
    pts, starts, ends, verts = _random_layout(rng)
    dist, _ = fn(pts, starts, ends, verts)
    for i, p in enumerate(pts):
        v = verts[starts[i] : ends[i]]
        cands = []
        for j in range(len(v)):
            if not np.all(np.isfinite(v[j])):
                continue
            nxt = j + 1 < len(v) and np.all(np.isfinite(v[j + 1]))
            prv = j > 0 and np.all(np.isfinite(v[j - 1]))
            if nxt:
                t = np.linspace(0, 1, 20001)[:, None]
                cands.append(np.min(np.linalg.norm(v[j] + t * (v[j + 1] - v[j]) - p, axis=1)))
            elif not prv:
                cands.append(np.linalg.norm(v[j] - p))
        expected = min(cands) if cands else np.inf
        if np.isinf(expected):
            assert np.isinf(dist[i])
        else:
            assert dist[i] == pytest.approx(expected, abs=5e-3)
            assert dist[i] <= expected + 1e-12


def test_lone_vertex_acts_as_point():
    verts = np.array([[np.nan, np.nan], [3.0, 4.0], [np.nan, np.nan]])
    for fn in (_kernels.polyline_offsets_numba, _kernels.polyline_offsets_numpy):
        d, off = fn(np.zeros((1, 2)), np.array([0]), np.array([3]), verts)
        assert d[0] == 5.0
        np.testing.assert_array_equal(off[0], [-3.0, -4.0])


def test_empty_range_is_infinite():
    verts = np.array([[0.0, 0.0], [1.0, 0.0]])
    for fn in (_kernels.polyline_offsets_numba, _kernels.polyline_offsets_numpy):
        d, off = fn(np.zeros((1, 2)), np.array([1]), np.array([1]), verts)
        assert np.isinf(d[0]) and np.all(np.isnan(off[0]))


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, PITCHCAL_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from pitchcal import _kernels; print(_kernels.backend())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == expected
