#!/usr/bin/env python3
"""Generate the frontend test fixtures from the real service.

Builds small deterministic volumes, runs the FastAPI service in-process,
verifies that the service's free-view bytes equal the offline renderings,
and freezes the request/response pairs under frontend/tests/fixtures/ for
the viewer's vitest suite to replay.

Scripted directions use components whose squared sums are exact dyadic
floats, so JS and numpy normalization agree bit for bit.
"""

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from csono import grids, simulate
from csono.core import Frame, Pose, Sweep
from csono.reconstruct import ReconstructionConfig, lattice_for_sweep, reconstruct_volume
from csono.render import axis_slice_plane, free_view_image, to_png_bytes
from csono.service import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"

DIRECTIONS = [
    (0.0, 1.0, 0.0),  # the acquisition beam axis
    (0.5, 0.5, 0.5),
    (0.5, -0.25, 0.25),
]
REFERENCE = (0.0, 1.0, 0.0)


def build_volumes():
    plane = simulate.Primitive(
        kind="plane", point=[0, 0, 0], normal=[0, -1, 0],
        ambient=0.1, specular=0.7, exponent=2.0, capture_mm=1e6,
    )
    scene = simulate.Scene((plane,), (), noise_sigma=0.02)
    geom = simulate.FrameGeometry(width=8, height=8, pixel_spacing=(1.0, 1.0))
    frames = []
    for axis in ((1, 0, 0), (0, 0, 1), (1, 0, 1)):
        traj = simulate.TrajectorySpec(
            kind="orbit", frame_count=8, angular_span_deg=200,
            start=Pose(np.eye(3), np.array([-3.5, -9.0, -3.5])),
            pivot=(0.0, 0.0, 0.0), axis=axis,
        )
        frames.extend(simulate.generate_sweep(scene, traj, geom, seed=6).frames)
    sweep = Sweep(tuple(Frame(f.pixels, f.pixel_spacing, f.pose) for f in frames), id="viewer-fx")
    lattice = lattice_for_sweep(sweep, spacing=1.0)
    return {
        "tens": reconstruct_volume(sweep, lattice, ReconstructionConfig(method="tensor", seed=1)),
        "sph": reconstruct_volume(
            sweep, lattice,
            ReconstructionConfig(method="spherical", grid=grids.build_fibonacci(42), seed=1),
        ),
        "mean": reconstruct_volume(sweep, lattice, ReconstructionConfig(method="mean", seed=1)),
    }


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    volumes = build_volumes()
    client = TestClient(create_app(volumes))
    tens = volumes["tens"]
    index = tens.lattice.dims[2] // 2
    plane = axis_slice_plane(tens.lattice, "axial", index)

    manifest = {
        "freeview": {"volume": "tens", "plane": "axial", "index": index, "cases": []},
        "slice": {},
        "voxel": {},
    }

    volumes_json = client.get("/api/volumes").content
    (FIXTURES / "volumes.json").write_bytes(volumes_json)

    for i, d in enumerate([REFERENCE] + DIRECTIONS):
        nd = np.asarray(d, dtype=np.float64)
        nd = [float(x) for x in nd / np.linalg.norm(nd)]
        golden = to_png_bytes(np.clip(free_view_image(tens, plane, np.array(nd))[0], 0, 1))
        url = (
            f"/api/volumes/tens/freeview?dx={nd[0]!r}&dy={nd[1]!r}&dz={nd[2]!r}"
            f"&plane=axial&index={index}"
        )
        served = client.get(url)
        assert served.status_code == 200, f"{url} -> {served.status_code}"
        assert served.content == golden, f"service bytes differ from offline render for {d}"
        name = "reference.png" if i == 0 else f"freeview_{i - 1}.png"
        (FIXTURES / name).write_bytes(golden)
        if i == 0:
            manifest["freeview"]["reference"] = {"direction": nd, "file": name}
        else:
            manifest["freeview"]["cases"].append({"direction": nd, "file": name})

    # slice fixtures for the scrub test: two adjacent indices of the mean volume
    mean = volumes["mean"]
    s_index = mean.lattice.dims[2] // 2
    for j, idx in enumerate((s_index, s_index + 1)):
        r = client.get(f"/api/volumes/mean/slice?plane=axial&index={idx}&mode=mean")
        assert r.status_code == 200
        (FIXTURES / f"slice_{idx}.png").write_bytes(r.content)
        key = "file" if j == 0 else "second_file"
        manifest["slice"][key] = f"slice_{idx}.png"
    manifest["slice"].update({"volume": "mean", "plane": "axial", "mode": "mean",
                              "index": s_index, "second_index": s_index + 1})

    # voxel payload of a filled spherical voxel for the inspector rose
    sph = volumes["sph"]
    filled = ~np.all(np.isnan(sph.cells), axis=1)
    counts = (~np.isnan(sph.cells)).sum(axis=1)
    best = int(np.argmax(counts * filled))
    x, y, z = sph.lattice.unflatten(best)
    r = client.get(f"/api/volumes/sph/voxel?x={x}&y={y}&z={z}")
    assert r.status_code == 200 and len(r.json()["cells"]) >= 2
    (FIXTURES / "voxel.json").write_bytes(r.content)
    manifest["voxel"] = {"volume": "sph", "x": x, "y": y, "z": z, "file": "voxel.json"}

    (FIXTURES / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    n_files = len(list(FIXTURES.iterdir()))
    print(f"wrote {n_files} fixture files to {FIXTURES}")


if __name__ == "__main__":
    main()
