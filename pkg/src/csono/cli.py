"""Command-line pipeline: simulate -> reconstruct -> evaluate -> slice/serve.

Exit codes: 0 success, 1 usage error (with a one-line remedy), 2 runtime
error. Defaults mirror the acquisition-parameter table this toolkit is
typically run with: 1 mm selection semi-axes, 0.5 mm voxel spacing, 30 deg
lat-long resolution, 512-cell geodesic grids.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluate, io, reconstruct, render, simulate
from .errors import CsonoError
from .grids import build_grid
from .kernels import BACKEND_NAME, set_threads
from .selection import SelectionEllipsoid


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _fmt(prog):
    return argparse.HelpFormatter(prog, width=96)


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(float(p) for p in parts)


def _grid_arg(text: str):
    try:
        name, _, param = text.partition(":")
        scheme = {"latlong": "lat_long", "ico": "icosahedral", "fib": "fibonacci"}[name]
        return build_grid(scheme, float(param))
    except (KeyError, ValueError) as exc:
        raise _UsageError(f"bad --grid {text!r}: use latlong:<deg> | ico:<s> | fib:<n> ({exc})")


def _threads_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("CS_THREADS", "0")) or None,
        help="kernel worker count (default: CS_THREADS or all cores); results do not depend on it",
    )


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csono", formatter_class=_fmt, description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"csono {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    ps = sub.add_parser(
        "simulate", formatter_class=_fmt,
        help="generate a tracked sweep from a scene config",
    )
    ps.add_argument("scene", help="scene TOML file (see docs/scene_config.md)")
    ps.add_argument("--traj-kind", choices=simulate.TRAJECTORY_KINDS, help="override [trajectory] kind")
    ps.add_argument("--frames", type=int, help="override frame count")
    ps.add_argument("--span", type=float, help="override angular span (degrees)")
    ps.add_argument("--seed", type=int, default=0, help="noise stream seed (default 0)")
    ps.add_argument("--sweep-id", help="sweep id recorded in provenance (default: output stem)")
    ps.add_argument("--out", required=True, help="output .cssweep path")

    pr = sub.add_parser(
        "reconstruct", formatter_class=_fmt,
        help="compound a sweep into a model volume",
    )
    pr.add_argument("--in", dest="sweep", required=True, help="input sweep file")
    pr.add_argument("--method", choices=reconstruct.METHODS, default="mean")
    pr.add_argument(
        "--grid", type=str, default="fib:512",
        help="spherical grid: latlong:<deg> | ico:<s> | fib:<n> (default fib:512)",
    )
    pr.add_argument("--cell-reducer", choices=("mean", "median"), default="mean")
    pr.add_argument("--spacing", type=float, default=0.5, help="voxel spacing in mm (default 0.5)")
    pr.add_argument("--ellipsoid", type=_vec3, default=(1.0, 1.0, 1.0), metavar="A,B,C",
                    help="selection semi-axes in mm (default 1,1,1)")
    pr.add_argument("--cap", type=int, default=500, help="max samples per voxel (default 500)")
    pr.add_argument("--min-tensor-samples", type=int, default=6)
    pr.add_argument("--spd-clamp", action="store_true",
                    help="clamp negative tensor eigenvalues to zero")
    pr.add_argument("--seed", type=int, default=0, help="subsampling seed (default 0)")
    _threads_flag(pr)
    pr.add_argument("--out", required=True, help="output .csvol path")

    pe = sub.add_parser(
        "evaluate", formatter_class=_fmt,
        help="reproject a volume at its sweep and report errors",
    )
    pe.add_argument("--volume", required=True)
    pe.add_argument("--sweep", required=True)
    pe.add_argument("--skip-missing", action=argparse.BooleanOptionalAction, default=True,
                    help="exclude samples without a usable model (default on)")
    pe.add_argument("--bins", type=int, default=10, help="variance bins (default 10)")
    pe.add_argument("--axis", choices=("intensity", "spherical"), default="spherical")
    pe.add_argument("--out", action="append", required=True, metavar="PATH",
                    help=".csv for the binned series, .json for the summary; repeatable")
    pe.add_argument("--raw-errors", metavar="PATH.npy",
                    help="also dump the per-sample squared errors as .npy")
    _threads_flag(pe)

    pl = sub.add_parser(
        "slice", formatter_class=_fmt,
        help="extract a 2D image from a volume",
    )
    pl.add_argument("--volume", required=True)
    pl.add_argument("--plane", choices=("axial", "lateral"), default="axial")
    pl.add_argument("--index", type=int, default=0, help="slice index along the fixed axis")
    pl.add_argument("--mode", choices=render.SLICE_MODES, required=True)
    pl.add_argument("--main", type=_vec3, help="color-map main direction (normal_color)")
    pl.add_argument("--ref", type=_vec3, help="color-map hue reference (normal_color)")
    pl.add_argument("--no-normalize", action="store_true",
                    help="skip min-max display normalization of trace/dominant images")
    pl.add_argument("--raw-out", help="also dump the raw float image as .npy")
    pl.add_argument("--out", required=True, help="output image (.pgm | .ppm | .png)")

    pv = sub.add_parser(
        "serve", formatter_class=_fmt,
        help="serve volumes over HTTP for the browser viewer",
    )
    pv.add_argument("--volume", action="append", required=True, help="volume file; repeatable")
    pv.add_argument("--bind", default="127.0.0.1:8000", metavar="HOST:PORT")
    pv.add_argument("--static", help="directory with the viewer bundle to serve at /")
    return p


def _cmd_simulate(args) -> int:
    scene, traj, geom = simulate.load_config(args.scene)
    overrides = {}
    if args.traj_kind:
        overrides["kind"] = args.traj_kind
    if args.frames is not None:
        overrides["frame_count"] = args.frames
    if args.span is not None:
        overrides["angular_span_deg"] = args.span
    if traj is None:
        if "kind" not in overrides or "frame_count" not in overrides:
            raise _UsageError(
                "scene config has no [trajectory]; pass --traj-kind and --frames"
            )
        traj = simulate.TrajectorySpec(
            kind=overrides["kind"],
            frame_count=overrides["frame_count"],
            angular_span_deg=overrides.get("angular_span_deg", 0.0),
        )
    elif overrides:
        traj = simulate.TrajectorySpec(
            kind=overrides.get("kind", traj.kind),
            frame_count=overrides.get("frame_count", traj.frame_count),
            angular_span_deg=overrides.get("angular_span_deg", traj.angular_span_deg),
            start=traj.start, step=traj.step, pivot=traj.pivot, axis=traj.axis,
        )
    sweep_id = args.sweep_id if args.sweep_id is not None else Path(args.out).stem
    sweep = simulate.generate_sweep(scene, traj, geom, seed=args.seed, sweep_id=sweep_id)
    io.write_sweep(sweep, args.out)
    print(f"wrote {args.out}: {sweep.frame_count} frames, {sweep.sample_count} samples")
    return 0


def _cmd_reconstruct(args) -> int:
    set_threads(args.threads)
    sweep = io.read_sweep(args.sweep)
    cfg = reconstruct.ReconstructionConfig(
        method=args.method,
        grid=_grid_arg(args.grid) if args.method == "spherical" else None,
        cell_reducer=args.cell_reducer,
        min_tensor_samples=args.min_tensor_samples,
        sample_cap=args.cap,
        spd_clamp=args.spd_clamp,
        ellipsoid=SelectionEllipsoid(*args.ellipsoid),
        seed=args.seed,
    )
    lattice = reconstruct.lattice_for_sweep(sweep, spacing=args.spacing)
    volume = reconstruct.reconstruct_volume(sweep, lattice, cfg)
    io.write_volume(volume, args.out)
    print(
        f"wrote {args.out}: {args.method} volume {lattice.dims} "
        f"({lattice.n_voxels} voxels, backend {BACKEND_NAME})"
    )
    return 0


def _cmd_evaluate(args) -> int:
    set_threads(args.threads)
    volume = io.read_volume(args.volume)
    sweep = io.read_sweep(args.sweep)
    axis = "intensity_var" if args.axis == "intensity" else "spherical_var"
    report = evaluate.binned_error(
        volume, sweep, axis=axis, n_bins=args.bins, skip_missing=args.skip_missing
    )
    for out in args.out:
        if out.endswith(".json"):
            report.write_json(out)
        elif out.endswith(".csv"):
            report.write_csv(out)
        else:
            raise _UsageError(f"--out {out!r} must end in .csv or .json")
        print(f"wrote {out}")
    if args.raw_errors:
        np.save(args.raw_errors, report.squared_errors)
        print(f"wrote {args.raw_errors}")
    print(f"mse={report.mse:.6g} evaluated={report.evaluated_count} missing={report.missing_count}")
    return 0


def _save_image(img, path: str) -> None:
    if path.endswith(".pgm"):
        render.write_pgm(img, path)
    elif path.endswith(".ppm"):
        render.write_ppm(img, path)
    elif path.endswith(".png"):
        Path(path).write_bytes(render.to_png_bytes(img))
    else:
        raise _UsageError(f"--out {path!r} must end in .pgm, .ppm or .png")


def _cmd_slice(args) -> int:
    volume = io.read_volume(args.volume)
    plane = render.axis_slice_plane(volume.lattice, args.plane, args.index)
    img, mask = render.extract_slice(volume, plane, args.mode, main=args.main, ref=args.ref)
    if args.raw_out:
        np.save(args.raw_out, img)
    if args.mode in ("trace", "dominant") and not args.no_normalize:
        img = render.normalize_minmax(img, mask)
    if img.ndim == 3 and args.out.endswith(".pgm"):
        raise _UsageError("color modes need .ppm or .png output")
    _save_image(img, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    volumes = {Path(v).stem: io.read_volume(v) for v in args.volume}
    host, _, port = args.bind.partition(":")
    app = create_app(volumes, static_dir=args.static)
    print(f"serving {len(volumes)} volume(s) on http://{args.bind}")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "slice": _cmd_slice,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 0
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except _UsageError as exc:
        print(f"error: {exc}\nrun 'csono --help' for usage", file=sys.stderr)
        return 1
    except (CsonoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
