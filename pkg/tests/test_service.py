import base64
import zlib

import numpy as np
import pytest
from fastapi.testclient import TestClient

from csono.grids import build_fibonacci
from csono.reconstruct import ReconstructionConfig, lattice_for_sweep, reconstruct_volume
from csono.render import axis_slice_plane, free_view_image, to_png_bytes
from csono.service import create_app


@pytest.fixture(scope="module")
def volumes(request):
    sweep = request.getfixturevalue("orbit_sweep")
    lattice = lattice_for_sweep(sweep, spacing=1.0)
    tensor = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="tensor"))
    spherical = reconstruct_volume(
        sweep, lattice, ReconstructionConfig(method="spherical", grid=build_fibonacci(42))
    )
    mean = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="mean"))
    return {"tens": tensor, "sph": spherical, "mean": mean}


@pytest.fixture(scope="module")
def client(volumes):
    return TestClient(create_app(volumes))


class TestVolumeListing:
    def test_lists_all_with_kinds(self, client):
        r = client.get("/api/volumes")
        assert r.status_code == 200
        entries = {e["id"]: e for e in r.json()}
        assert set(entries) == {"tens", "sph", "mean"}
        assert entries["tens"]["kind"] == "tensor"
        assert entries["sph"]["grid"]["n_cells"] == 42
        assert entries["mean"]["grid"] is None

    def test_unknown_volume_404(self, client):
        assert client.get("/api/volumes/nope/slice?mode=mean").status_code == 404


class TestFreeview:
    def test_zero_direction_400(self, client):
        r = client.get("/api/volumes/tens/freeview?dx=0&dy=0&dz=0")
        assert r.status_code == 400

    def test_scalar_volume_422(self, client):
        r = client.get("/api/volumes/mean/freeview?dx=0&dy=1&dz=0")
        assert r.status_code == 422

    def test_matches_offline_golden(self, client, volumes):
        vol = volumes["tens"]
        idx = vol.lattice.dims[2] // 2
        d = np.array([0.3, 0.9, -0.2])
        d /= np.linalg.norm(d)
        r = client.get(
            f"/api/volumes/tens/freeview?dx={d[0]}&dy={d[1]}&dz={d[2]}"
            f"&plane=axial&index={idx}"
        )
        assert r.status_code == 200
        plane = axis_slice_plane(vol.lattice, "axial", idx)
        img, _ = free_view_image(vol, plane, d)
        assert r.content == to_png_bytes(img)

    def test_direction_normalized_server_side(self, client):
        a = client.get("/api/volumes/tens/freeview?dx=0&dy=2&dz=0&index=3")
        b = client.get("/api/volumes/tens/freeview?dx=0&dy=1&dz=0&index=3")
        assert a.content == b.content

    def test_identical_requests_identical_bytes_and_etag(self, client):
        url = "/api/volumes/tens/freeview?dx=0.5&dy=0.5&dz=0.1&index=2"
        a, b = client.get(url), client.get(url)
        assert a.content == b.content
        assert a.headers["etag"] == b.headers["etag"]


class TestSlice:
    def test_png_and_mask_header(self, client, volumes):
        vol = volumes["sph"]
        r = client.get("/api/volumes/sph/slice?plane=axial&index=4&mode=cell_mean")
        assert r.status_code == 200
        assert r.content.startswith(b"\x89PNG")
        dims, packed = r.headers["x-cs-mask"].split(";")
        w, h = (int(v) for v in dims.split("x"))
        mask = np.frombuffer(zlib.decompress(base64.b64decode(packed)), np.uint8)
        assert mask.size == w * h
        nx, ny, _ = vol.lattice.dims
        assert (w, h) == (nx, ny)

    def test_bad_mode_422(self, client):
        r = client.get("/api/volumes/mean/slice?mode=trace")
        assert r.status_code == 422

    def test_bad_index_400(self, client):
        r = client.get("/api/volumes/mean/slice?mode=mean&index=10000")
        assert r.status_code == 400


class TestVoxelInspector:
    def test_scalar_payload(self, client, volumes):
        nx, ny, nz = volumes["mean"].lattice.dims
        r = client.get(f"/api/volumes/mean/voxel?x={nx//2}&y={ny//2}&z={nz//2}")
        body = r.json()
        assert body["kind"] == "scalar_mean"
        assert "value" in body and "empty" in body

    def test_tensor_payload(self, client, volumes):
        vol = volumes["tens"]
        i = int(np.nonzero(vol.valid)[0][0])
        x, y, z = vol.lattice.unflatten(i)
        body = client.get(f"/api/volumes/tens/voxel?x={x}&y={y}&z={z}").json()
        assert body["valid"] is True
        assert len(body["coeffs"]) == 6

    def test_spherical_payload(self, client, volumes):
        vol = volumes["sph"]
        filled = ~np.all(np.isnan(vol.cells), axis=1)
        i = int(np.nonzero(filled)[0][0])
        x, y, z = vol.lattice.unflatten(i)
        body = client.get(f"/api/volumes/sph/voxel?x={x}&y={y}&z={z}").json()
        assert body["kind"] == "spherical"
        assert len(body["cells"]) >= 1
        cell = body["cells"][0]
        assert {"k", "direction", "value"} <= set(cell)
        assert abs(np.linalg.norm(cell["direction"]) - 1.0) < 1e-9

    def test_out_of_lattice_400(self, client):
        assert client.get("/api/volumes/mean/voxel?x=999&y=0&z=0").status_code == 400
