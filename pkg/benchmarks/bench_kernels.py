"""Time the numba and numpy distance kernels on realistic workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workloads: raw point/segment distances, one image's point-to-polyline
offsets (the inner loop of metrics and of every LM residual), and a full
evaluate_image call under each backend.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pitchcal import _kernels


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def polyline_workload(rng, n_classes=12, pts_per_class=12, verts_per_class=400):
    verts, points, starts, ends = [], [], [], []
    offset = 0
    for _ in range(n_classes):
        t = np.linspace(0, 1, verts_per_class)
        p0, p1 = rng.uniform(0, 1920, 2), rng.uniform(0, 1080, 2)
        v = np.column_stack([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])])
        verts.append(v)
        verts.append(np.full((1, 2), np.nan))
        points.append(v[rng.integers(0, verts_per_class, pts_per_class)] + rng.normal(0, 2, (pts_per_class, 2)))
        starts.append(np.full(pts_per_class, offset))
        ends.append(np.full(pts_per_class, offset + verts_per_class))
        offset += verts_per_class + 1
    return np.concatenate(points), np.concatenate(starts), np.concatenate(ends), np.concatenate(verts)


def evaluate_timing(disable_numba, repeat):
    code = (
        "import time;"
        "from pitchcal.synth import SceneConfig, generate_scene;"
        "from pitchcal.field_model import build_pitch_template;"
        "from pitchcal.metrics import evaluate_image;"
        "t=build_pitch_template(); s=generate_scene(SceneConfig(seed=1),0,t);"
        "evaluate_image(s.camera,t,s.annotation,5.0);"
        f"ts=[];\nfor _ in range({repeat}):\n"
        " t0=time.perf_counter(); evaluate_image(s.camera,t,s.annotation,5.0); ts.append(time.perf_counter()-t0)\n"
        "print(min(ts))"
    )
    env = dict(os.environ, PITCHCAL_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=200_000, help="point/segment triples")
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    x, a, b = (rng.uniform(-10, 10, (args.n, 2)) for _ in range(3))
    pts, starts, ends, verts = polyline_workload(rng)

    rows = []
    t_np = best_of(lambda: _kernels.segment_distance_numpy(x, a, b), args.repeat)
    t_nb = best_of(lambda: _kernels.segment_distance_numba(x, a, b), args.repeat)
    rows.append((f"segment_distance n={args.n}", t_np, t_nb))
    t_np = best_of(lambda: _kernels.polyline_offsets_numpy(pts, starts, ends, verts), args.repeat)
    t_nb = best_of(lambda: _kernels.polyline_offsets_numba(pts, starts, ends, verts), args.repeat)
    rows.append((f"polyline_offsets {len(pts)} pts x {len(verts)} verts", t_np, t_nb))
    rows.append(("evaluate_image (one scene)", evaluate_timing(True, args.repeat), evaluate_timing(False, args.repeat)))

    print(f"{'workload':48s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, tn, tb in rows:
        print(f"{name:48s} {1e3 * tn:10.3f} {1e3 * tb:10.3f} {tn / tb:8.1f}x")


if __name__ == "__main__":
    main()
