#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three reconstruction kernels, sample reprojection, and the
constant-time Fibonacci cell lookup on a synthetic orbit sweep.

Usage:
    python benchmarks/benchmark_kernels.py
    python benchmarks/benchmark_kernels.py --frames 30 --width 20 --repeat 5
    python benchmarks/benchmark_kernels.py --output results.json
"""

import argparse
import json
import time

import numpy as np

from csono import grids, simulate
from csono.core import Frame, Pose, Sweep
from csono.kernels import (
    TENSOR_COND_LIMIT,
    build_hash,
    design_rows,
    numba_backend,
    numpy_backend,
    subsample_base_state,
)
from csono.reconstruct import lattice_for_sweep


def build_problem(frames: int, width: int):
    plane = simulate.Primitive(
        kind="plane", point=[0, 0, 0], normal=[0, -1, 0],
        ambient=0.1, specular=0.7, exponent=2.0, capture_mm=1e6,
    )
    scene = simulate.Scene((plane,), (), noise_sigma=0.02)
    geom = simulate.FrameGeometry(width=width, height=width, pixel_spacing=(1.0, 1.0))
    all_frames = []
    for axis in ((1, 0, 0), (0, 0, 1), (1, 0, 1)):
        traj = simulate.TrajectorySpec(
            kind="orbit", frame_count=frames, angular_span_deg=240,
            start=Pose(np.eye(3), np.array([-(width - 1) / 2, -12.0, -(width - 1) / 2])),
            pivot=(0, 0, 0), axis=axis,
        )
        all_frames.extend(simulate.generate_sweep(scene, traj, geom, seed=1).frames)
    sweep = Sweep(tuple(Frame(f.pixels, f.pixel_spacing, f.pose) for f in all_frames), id="bench")
    lattice = lattice_for_sweep(sweep, spacing=1.0)
    arr = sweep.samples
    h = build_hash(arr.positions, 1.0)
    common = (
        h.starts, h.order, h.qmin, h.qdims, h.cell_size,
        lattice.origin, lattice.spacing, np.asarray(lattice.dims, np.int64),
        np.array([1.0, 1.0, 1.0]), 500,
        np.uint64(subsample_base_state(sweep.id, 0)),
    )
    return sweep, lattice, arr, common


def timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=20, help="frames per orbit segment")
    ap.add_argument("--width", type=int, default=16, help="frame width/height in pixels")
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions (best-of)")
    ap.add_argument("--output", help="write results as JSON")
    args = ap.parse_args()

    if numba_backend is None:
        print("numba backend unavailable; nothing to compare")
        return 1

    sweep, lattice, arr, common = build_problem(args.frames, args.width)
    grid = grids.build_fibonacci(512)
    cell_ids = grids.cell_of_many(grid, arr.directions)
    rows = design_rows(arr.directions)
    dims = np.asarray(lattice.dims, np.int64)
    print(f"problem: {arr.count} samples, {lattice.n_voxels} voxels, grid {grid.n_cells} cells")

    cases = {
        "reconstruct_mean": lambda bk: bk.reconstruct_scalar(
            arr.intensities, arr.positions, arr.ray_ids, *common, False),
        "reconstruct_tensor": lambda bk: bk.reconstruct_tensor(
            rows, arr.intensities, arr.positions, arr.ray_ids, *common,
            6, False, TENSOR_COND_LIMIT),
        "reconstruct_spherical": lambda bk: bk.reconstruct_spherical(
            cell_ids, arr.intensities, arr.positions, arr.ray_ids, *common,
            grid.n_cells, False),
        "voxel_stats": lambda bk: bk.voxel_stats(
            arr.intensities, arr.positions, arr.directions, arr.ray_ids, *common),
    }

    # reprojection needs a reconstructed volume
    values, empty = numba_backend.reconstruct_scalar(
        arr.intensities, arr.positions, arr.ray_ids, *common, False)
    cases["reproject_scalar"] = lambda bk: bk.reproject_scalar(
        values, empty, lattice.origin, lattice.spacing, dims, arr.positions)

    print("warming up JIT...")
    for fn in cases.values():
        fn(numba_backend)

    results = {}
    header = f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, fn in cases.items():
        t_nb = timeit(lambda: fn(numba_backend), args.repeat)
        t_np = timeit(lambda: fn(numpy_backend), args.repeat)
        results[name] = {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb}
        print(f"{name:<24}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")

    # the fibonacci inverse mapping has no numba twin; compare vs brute force
    dirs = np.random.default_rng(3).standard_normal((10**5, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t_fast = timeit(lambda: grids.cell_of_many(grid, dirs), args.repeat)
    t_brute = timeit(lambda: np.argmax(dirs @ grid.points.T, axis=1), args.repeat)
    results["fibonacci_cell_of"] = {
        "constant_time_s": t_fast, "brute_force_s": t_brute, "speedup": t_brute / t_fast,
    }
    print(f"{'fibonacci_cell_of':<24}{t_fast:>12.4f}{t_brute:>12.4f}{t_brute / t_fast:>9.1f}x"
          f"  (constant-time vs brute force, 1e5 dirs)")

    if args.output:
        with open(args.output, "w") as f:
            json.dump({"problem": {"samples": int(arr.count), "voxels": lattice.n_voxels},
                       "results": results}, f, indent=2)
        print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
