"""Bit-exact binary files for sweeps and volumes.

All multi-byte values are little-endian. Layouts (see docs/formats.md):

CSSWEEP1: magic "CSSWEEP1"; u32 frame_count, u32 width, u32 height,
f64 lateral_spacing, f64 axial_spacing; then per frame 12 f64 (row-major 3x3
rotation, then translation) followed by width*height f32 intensities in
row-major pixel order.

CSVOL1: magic "CSVOL1"; u8 kind (1 mean, 2 median, 3 tensor, 4 spherical);
3 u32 dims; 3 f64 origin; f64 spacing; u8 grid scheme + u32 grid param (both
zero for non-spherical kinds); u32 provenance byte length + UTF-8 JSON; then
one fixed-size record per voxel: scalar f32 + u8 empty flag, tensor 6 f32 +
u8 valid flag, spherical n_cells f32 with NaN as the empty-cell sentinel.

Writing then reading is the identity on the in-memory model; reading then
rewriting reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import (
    Frame,
    KIND_SCALAR_MEAN,
    KIND_SCALAR_MEDIAN,
    KIND_SPHERICAL,
    KIND_TENSOR,
    Pose,
    Sweep,
    Volume,
    VoxelLattice,
)
from .errors import (
    BadMagic,
    FormatError,
    InvalidPose,
    OutOfRangeIntensity,
    TruncatedFile,
)
from .grids import SCHEME_FIBONACCI, SCHEME_ICOSAHEDRAL, SCHEME_LAT_LONG, build_grid

SWEEP_MAGIC = b"CSSWEEP1"
VOLUME_MAGIC = b"CSVOL1"

_KIND_TAGS = {
    KIND_SCALAR_MEAN: 1,
    KIND_SCALAR_MEDIAN: 2,
    KIND_TENSOR: 3,
    KIND_SPHERICAL: 4,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

_SCHEME_TAGS = {SCHEME_LAT_LONG: 1, SCHEME_ICOSAHEDRAL: 2, SCHEME_FIBONACCI: 3}
_TAG_SCHEMES = {v: k for k, v in _SCHEME_TAGS.items()}

_SCALAR_REC = np.dtype([("v", "<f4"), ("e", "u1")])
_TENSOR_REC = np.dtype([("c", "<f4", (6,)), ("v", "u1")])


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"{self.what} ends {self.pos + n - len(self.data)} bytes early")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count)
        return np.frombuffer(raw, dtype=dt, count=count).copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{self.what} has {len(self.data) - self.pos} trailing bytes")


def write_sweep(sweep: Sweep, path) -> None:
    parts = [SWEEP_MAGIC]
    lat, ax = sweep.pixel_spacing
    parts.append(struct.pack("<IIIdd", sweep.frame_count, sweep.width, sweep.height, lat, ax))
    for f in sweep.frames:
        if f.pixels.min() < 0.0 or f.pixels.max() > 1.0:
            raise OutOfRangeIntensity("pixel intensities must lie in [0, 1]")
        pose12 = np.concatenate([f.pose.rotation.reshape(9), f.pose.translation])
        parts.append(pose12.astype("<f8").tobytes())
        parts.append(f.pixels.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_sweep(path) -> Sweep:
    path = Path(path)
    r = _Reader(path.read_bytes(), f"sweep file {path.name}")
    if r.take(len(SWEEP_MAGIC)) != SWEEP_MAGIC:
        raise BadMagic(f"{path.name} is not a sweep file")
    frame_count, width, height, lat, ax = r.unpack("IIIdd")
    if frame_count < 1 or width < 1 or height < 1 or lat <= 0 or ax <= 0:
        raise FormatError("sweep header has non-positive geometry")
    frames = []
    for i in range(frame_count):
        pose12 = r.array("<f8", 12)
        rot = pose12[:9].reshape(3, 3)
        dev = float(np.abs(rot.T @ rot - np.eye(3)).max())
        if dev > 1e-6 or abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise InvalidPose(f"frame {i} rotation deviates from orthonormal by {dev:.2e}")
        if dev > 1e-9:  # within file tolerance: project onto the nearest rotation
            u, _, vt = np.linalg.svd(rot)
            rot = u @ vt
        pixels = r.array("<f4", width * height).astype(np.float64).reshape(height, width)
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise OutOfRangeIntensity(f"frame {i} holds intensities outside [0, 1]")
        frames.append(Frame(pixels, (lat, ax), Pose(rot, pose12[9:]), i))
    r.done()
    return Sweep(tuple(frames), id=path.stem)


def _grid_spec(volume: Volume) -> tuple[int, int]:
    if volume.kind != KIND_SPHERICAL:
        return 0, 0
    g = volume.grid
    if g.param != int(g.param) or int(g.param) < 0:
        raise FormatError(f"grid parameter {g.param} is not serializable as u32")
    return _SCHEME_TAGS[g.scheme], int(g.param)


def write_volume(volume: Volume, path) -> None:
    parts = [VOLUME_MAGIC]
    scheme_tag, param = _grid_spec(volume)
    nx, ny, nz = volume.lattice.dims
    parts.append(
        struct.pack(
            "<BIIIddddBI",
            _KIND_TAGS[volume.kind],
            nx, ny, nz,
            *volume.lattice.origin,
            volume.lattice.spacing,
            scheme_tag, param,
        )
    )
    prov = json.dumps(volume.provenance, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(prov)))
    parts.append(prov)

    if volume.kind in (KIND_SCALAR_MEAN, KIND_SCALAR_MEDIAN):
        rec = np.zeros(volume.n_voxels, dtype=_SCALAR_REC)
        rec["v"] = volume.values
        rec["e"] = volume.empty.astype(np.uint8)
        parts.append(rec.tobytes())
    elif volume.kind == KIND_TENSOR:
        rec = np.zeros(volume.n_voxels, dtype=_TENSOR_REC)
        rec["c"] = volume.coeffs
        rec["v"] = volume.valid.astype(np.uint8)
        parts.append(rec.tobytes())
    else:
        parts.append(volume.cells.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_volume(path) -> Volume:
    path = Path(path)
    r = _Reader(path.read_bytes(), f"volume file {path.name}")
    if r.take(len(VOLUME_MAGIC)) != VOLUME_MAGIC:
        raise BadMagic(f"{path.name} is not a volume file")
    kind_tag, nx, ny, nz, ox, oy, oz, spacing, scheme_tag, param = r.unpack("BIIIddddBI")
    if kind_tag not in _TAG_KINDS:
        raise FormatError(f"unknown volume kind tag {kind_tag}")
    kind = _TAG_KINDS[kind_tag]
    if min(nx, ny, nz) < 1 or spacing <= 0:
        raise FormatError("volume header has non-positive geometry")
    (prov_len,) = r.unpack("I")
    try:
        provenance = json.loads(r.take(prov_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"provenance is not valid JSON: {exc}") from exc
    lattice = VoxelLattice((nx, ny, nz), np.array([ox, oy, oz]), spacing)
    n = lattice.n_voxels

    if kind == KIND_SPHERICAL:
        if scheme_tag not in _TAG_SCHEMES:
            raise FormatError(f"unknown grid scheme tag {scheme_tag}")
        grid = build_grid(_TAG_SCHEMES[scheme_tag], param)
        _check_grid(grid)
        cells = r.array("<f4", n * grid.n_cells).reshape(n, grid.n_cells)
        r.done()
        return Volume(lattice=lattice, kind=kind, cells=cells, grid=grid, provenance=provenance)

    if scheme_tag != 0 or param != 0:
        raise FormatError(f"{kind} volume must carry a zero grid spec")
    if kind == KIND_TENSOR:
        rec = r.array(_TENSOR_REC, n)
        r.done()
        coeffs = rec["c"]
        valid = rec["v"] != 0
        if np.isnan(coeffs[valid]).any():
            raise FormatError("NaN tensor coefficients on a voxel marked valid")
        return Volume(lattice=lattice, kind=kind, coeffs=coeffs, valid=valid, provenance=provenance)

    rec = r.array(_SCALAR_REC, n)
    r.done()
    values = rec["v"]
    empty = rec["e"] != 0
    if np.isnan(values[~empty]).any():
        raise FormatError("NaN scalar value on a voxel not marked empty")
    return Volume(lattice=lattice, kind=kind, values=values, empty=empty, provenance=provenance)


def _check_grid(grid) -> None:
    """Spot-check the rebuilt grid's direction<->cell bijection."""
    rng = np.random.default_rng(0xC5)
    for k in rng.integers(0, grid.n_cells, size=16):
        if grid.cell_of(grid.direction_of(int(k))) != int(k):
            raise FormatError("rebuilt grid fails the direction<->cell bijection")
