import json
from pathlib import Path

import numpy as np
import pytest

from csono.cli import build_parser, main
from csono.io import read_volume

SCENE_TOML = """
noise_sigma = 0.01

[[primitive]]
kind = "plane"
point = [6.0, 12.0, 6.0]
normal = [0.0, -1.0, 0.0]
ambient = 0.1
specular = 0.8
exponent = 6.0
capture_mm = 1.5

[trajectory]
kind = "fan_tilt"
frame_count = 10
angular_span_deg = 50.0
[trajectory.start]
translation = [0.0, 6.0, 6.0]

[frame]
width = 12
height = 12
pixel_spacing = [1.0, 1.0]
"""


@pytest.fixture(scope="module")
def scene_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "scene.toml"
    p.write_text(SCENE_TOML)
    return p


@pytest.fixture(scope="module")
def sweep_file(scene_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "fixture.cssweep"
    assert main(["simulate", str(scene_file), "--seed", "5", "--out", str(out)]) == 0
    return out


def test_simulate_writes_sweep(sweep_file):
    assert sweep_file.exists() and sweep_file.stat().st_size > 0


def test_full_pipeline(tmp_path, sweep_file):
    vols = {}
    for method, grid in [
        ("mean", None), ("median", None), ("tensor", None), ("spherical", "fib:64"),
    ]:
        out = tmp_path / f"{method}.csvol"
        args = [
            "reconstruct", "--in", str(sweep_file), "--method", method,
            "--spacing", "1.0", "--seed", "1", "--out", str(out),
        ]
        if grid:
            args += ["--grid", grid]
        assert main(args) == 0
        vols[method] = out
    rep_csv = tmp_path / "report.csv"
    rep_json = tmp_path / "report.json"
    assert main([
        "evaluate", "--volume", str(vols["spherical"]), "--sweep", str(sweep_file),
        "--bins", "4", "--axis", "spherical",
        "--out", str(rep_csv), "--out", str(rep_json),
    ]) == 0
    summary = json.loads(rep_json.read_text())
    assert summary["mse"] >= 0.0
    assert rep_csv.read_text().splitlines()[0] == "bin_center,mse,count"

    img = tmp_path / "slice.pgm"
    assert main([
        "slice", "--volume", str(vols["mean"]), "--plane", "axial",
        "--index", "3", "--mode", "mean", "--out", str(img),
    ]) == 0
    assert img.read_bytes().startswith(b"P5\n")

    png = tmp_path / "slice.png"
    assert main([
        "slice", "--volume", str(vols["spherical"]), "--plane", "axial",
        "--index", "3", "--mode", "normal_color", "--out", str(png),
    ]) == 0
    assert png.read_bytes().startswith(b"\x89PNG")


def test_reconstruct_deterministic(tmp_path, sweep_file):
    outs = []
    for name in ("a.csvol", "b.csvol"):
        out = tmp_path / name
        assert main([
            "reconstruct", "--in", str(sweep_file), "--method", "spherical",
            "--grid", "fib:42", "--spacing", "1.0", "--seed", "7", "--out", str(out),
        ]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_unknown_method_usage_error(tmp_path, sweep_file, capsys):
    rc = main(["reconstruct", "--in", str(sweep_file), "--method", "magic",
               "--out", str(tmp_path / "x.csvol")])
    assert rc == 1
    assert "invalid choice" in capsys.readouterr().err


def test_bad_grid_usage_error(tmp_path, sweep_file, capsys):
    rc = main(["reconstruct", "--in", str(sweep_file), "--method", "spherical",
               "--grid", "fib:0", "--out", str(tmp_path / "x.csvol")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "fib:0" in err and "remedy" not in err  # one-line message + usage hint


def test_missing_input_runtime_error(tmp_path, capsys):
    rc = main(["reconstruct", "--in", str(tmp_path / "nope.cssweep"),
               "--method", "mean", "--out", str(tmp_path / "x.csvol")])
    assert rc == 2


def test_ellipsoid_flag_parsed(tmp_path, sweep_file):
    out = tmp_path / "e.csvol"
    assert main([
        "reconstruct", "--in", str(sweep_file), "--method", "mean",
        "--spacing", "1.0", "--ellipsoid", "2,1.5,1", "--out", str(out),
    ]) == 0
    vol = read_volume(out)
    assert vol.provenance["ellipsoid"] == [2.0, 1.5, 1.0]


def test_threads_flag_does_not_change_output(tmp_path, sweep_file):
    blobs = []
    for t in ("1", "8"):
        out = tmp_path / f"t{t}.csvol"
        assert main([
            "reconstruct", "--in", str(sweep_file), "--method", "mean",
            "--spacing", "1.0", "--threads", t, "--out", str(out),
        ]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_raw_error_export(tmp_path, sweep_file):
    vol = tmp_path / "m.csvol"
    assert main(["reconstruct", "--in", str(sweep_file), "--method", "mean",
                 "--spacing", "1.0", "--out", str(vol)]) == 0
    raw = tmp_path / "errors.npy"
    assert main(["evaluate", "--volume", str(vol), "--sweep", str(sweep_file),
                 "--out", str(tmp_path / "r.json"), "--raw-errors", str(raw)]) == 0
    errors = np.load(raw)
    assert errors.ndim == 1 and errors.size > 0 and (errors >= 0).all()


def test_cs_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("CS_THREADS", "3")
    args = build_parser().parse_args(["reconstruct", "--in", "x", "--method", "mean", "--out", "y"])
    assert args.threads == 3


def _full_help() -> str:
    parser = build_parser()
    parts = [parser.format_help()]
    subs = next(a for a in parser._actions if hasattr(a, "choices") and a.choices)
    for name, sub in subs.choices.items():
        parts.append(f"{'=' * 20} csono {name} {'=' * 20}\n{sub.format_help()}")
    return "\n".join(parts)


def test_help_snapshot():
    snap = Path(__file__).parent / "data" / "cli_help.txt"
    assert _full_help() == snap.read_text()


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "csono" in capsys.readouterr().out
