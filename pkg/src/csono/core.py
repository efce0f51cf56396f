"""Domain types shared by all modules, plus frame-to-world geometry.

A tracked sweep is an ordered list of 2D frames. Every pixel of a frame is one
measurement: an intensity in [0, 1], a world position, and the beam direction
it was acquired from. For a linear transducer the beam direction is the
frame's axial image axis pushed through the frame pose, so all pixels of one
frame share a direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import IndexOutOfRange, InvalidArgument
from .grids import SphericalGrid

AXIAL_AXIS = np.array([0.0, 1.0, 0.0])  # image y = along the beam

EMPTY_CELL = np.nan  # sentinel for spherical cells with no sample


def _as_vec3(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise InvalidArgument(f"{name} must be a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class Pose:
    """Rigid transform from image coordinates (mm) to world coordinates (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = _as_vec3(self.translation, "translation")
        if r.shape != (3, 3):
            raise InvalidArgument(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise InvalidArgument("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvalidArgument("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=np.float64) + self.translation

    def apply_inverse(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=np.float64) - self.translation)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Sample:
    """One ultrasound measurement: intensity, world position, beam direction."""

    intensity: float
    position: np.ndarray
    direction: np.ndarray
    ray_id: int
    frame_id: int

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise InvalidArgument(f"intensity {self.intensity} outside [0, 1]")
        pos = _as_vec3(self.position, "position")
        d = _as_vec3(self.direction, "direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise InvalidArgument("direction is not unit length within 1e-9")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class Frame:
    """One tracked B-mode image of ``width`` rays by ``height`` samples.

    ``pixels`` is indexed [iy, ix]; image x is lateral (one column per scan
    line), image y is axial (along the beam). ``index`` is the frame's
    position within its sweep and feeds the ray numbering.
    """

    pixels: np.ndarray
    pixel_spacing: tuple[float, float]  # (lateral, axial) mm
    pose: Pose
    index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidArgument(f"pixels must be a non-empty 2D array, got {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidArgument("pixel intensities must lie in [0, 1]")
        lat, ax = self.pixel_spacing
        if lat <= 0 or ax <= 0:
            raise InvalidArgument(f"pixel spacings must be positive, got {self.pixel_spacing}")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "pixel_spacing", (float(lat), float(ax)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @cached_property
    def beam_direction(self) -> np.ndarray:
        d = self.pose.rotation @ AXIAL_AXIS
        return d / np.linalg.norm(d)


def sample_of_pixel(frame: Frame, ix: int, iy: int) -> Sample:
    """World-space sample of pixel (ix, iy); ray_id encodes (frame, column)."""
    if not (0 <= ix < frame.width and 0 <= iy < frame.height):
        raise IndexOutOfRange(
            f"pixel ({ix}, {iy}) outside {frame.width}x{frame.height} frame"
        )
    lat, ax = frame.pixel_spacing
    pos = frame.pose.apply(np.array([ix * lat, iy * ax, 0.0]))
    return Sample(
        intensity=float(frame.pixels[iy, ix]),
        position=pos,
        direction=frame.beam_direction,
        ray_id=frame.index * frame.width + ix,
        frame_id=frame.index,
    )


@dataclass(frozen=True)
class SampleArrays:
    """Flat per-sample arrays of a sweep, in frame-major pixel order.

    Sample g = frame*width*height + iy*width + ix. This ordering defines the
    deterministic tie-breaks used by selection and reconstruction.
    """

    intensities: np.ndarray  # (n,) float64
    positions: np.ndarray  # (n, 3) float64
    directions: np.ndarray  # (n, 3) float64 unit
    ray_ids: np.ndarray  # (n,) int64
    frame_ids: np.ndarray  # (n,) int64

    @property
    def count(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class Sweep:
    """Ordered tracked frames sharing one probe geometry."""

    frames: tuple[Frame, ...]
    id: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InvalidArgument("sweep must contain at least one frame")
        w, h = frames[0].width, frames[0].height
        spacing = frames[0].pixel_spacing
        fixed = []
        for i, f in enumerate(frames):
            if (f.width, f.height) != (w, h) or f.pixel_spacing != spacing:
                raise InvalidArgument("all frames of a sweep must share geometry")
            fixed.append(f if f.index == i else Frame(f.pixels, f.pixel_spacing, f.pose, i))
        object.__setattr__(self, "frames", tuple(fixed))

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def pixel_spacing(self) -> tuple[float, float]:
        return self.frames[0].pixel_spacing

    @property
    def sample_count(self) -> int:
        return self.frame_count * self.width * self.height

    @cached_property
    def samples(self) -> SampleArrays:
        w, h = self.width, self.height
        n = self.sample_count
        lat, ax = self.pixel_spacing
        ix, iy = np.meshgrid(np.arange(w), np.arange(h))  # (h, w)
        img = np.stack(
            [ix.ravel() * lat, iy.ravel() * ax, np.zeros(w * h)], axis=1
        )  # (w*h, 3) image-plane coords in pixel C-order

        intensities = np.empty(n)
        positions = np.empty((n, 3))
        directions = np.empty((n, 3))
        ray_ids = np.empty(n, dtype=np.int64)
        frame_ids = np.empty(n, dtype=np.int64)
        for f in self.frames:
            s = slice(f.index * w * h, (f.index + 1) * w * h)
            intensities[s] = f.pixels.ravel()
            positions[s] = img @ f.pose.rotation.T + f.pose.translation
            directions[s] = f.beam_direction
            ray_ids[s] = f.index * w + ix.ravel()
            frame_ids[s] = f.index
        return SampleArrays(intensities, positions, directions, ray_ids, frame_ids)

    def sample_at(self, g: int) -> Sample:
        """Materialize the Sample with flat index ``g``."""
        w, h = self.width, self.height
        f, rem = divmod(int(g), w * h)
        iy, ix = divmod(rem, w)
        return sample_of_pixel(self.frames[f], ix, iy)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sweep) or self.id != other.id:
            return False
        if self.frame_count != other.frame_count or self.pixel_spacing != other.pixel_spacing:
            return False
        return all(
            np.array_equal(a.pixels, b.pixels)
            and np.array_equal(a.pose.rotation, b.pose.rotation)
            and np.array_equal(a.pose.translation, b.pose.translation)
            for a, b in zip(self.frames, other.frames)
        )


@dataclass(frozen=True)
class VoxelLattice:
    """Regular isotropic 3D lattice; voxel (ix, iy, iz) sits at
    origin + spacing * (ix, iy, iz). Linear voxel order is C order over
    (ix, iy, iz), i.e. iz fastest."""

    dims: tuple[int, int, int]
    origin: np.ndarray
    spacing: float = 0.5

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise InvalidArgument(f"dims must be three positive integers, got {self.dims}")
        if self.spacing <= 0:
            raise InvalidArgument(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", _as_vec3(self.origin, "origin"))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        return self.origin + self.spacing * np.array([ix, iy, iz], dtype=np.float64)

    def flat_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, nz = self.dims
        return (ix * ny + iy) * nz + iz

    def unflatten(self, i: int) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        ix, rem = divmod(int(i), ny * nz)
        iy, iz = divmod(rem, nz)
        return ix, iy, iz

    def centers(self) -> np.ndarray:
        """(n_voxels, 3) voxel centers in linear order."""
        nx, ny, nz = self.dims
        ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1).astype(np.float64)
        return self.origin + self.spacing * idx


@dataclass(frozen=True)
class SymmetricTensor:
    """Symmetric 3x3 tensor stored as (txx, tyy, tzz, txy, txz, tyz).

    ``valid`` is False when the fit failed; then all coefficients are 0 and
    the voxel is excluded from statistics.
    """

    coeffs: np.ndarray
    valid: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if c.shape != (6,):
            raise InvalidArgument(f"tensor needs 6 coefficients, got {c.shape}")
        if not self.valid:
            c = np.zeros(6)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def invalid(cls) -> "SymmetricTensor":
        return cls(np.zeros(6), valid=False)

    @classmethod
    def from_matrix(cls, m, valid: bool = True) -> "SymmetricTensor":
        m = np.asarray(m, dtype=np.float64)
        return cls(
            np.array([m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2]]), valid=valid
        )

    def matrix(self) -> np.ndarray:
        xx, yy, zz, xy, xz, yz = self.coeffs
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])

    def project(self, d) -> float:
        """Quadratic-form intensity d^T T d for a unit direction d."""
        d = np.asarray(d, dtype=np.float64)
        return float(d @ self.matrix() @ d)


@dataclass(frozen=True)
class SphericalModel:
    """Per-cell intensities on a shared spherical grid; NaN marks empty cells."""

    cells: np.ndarray
    grid: SphericalGrid

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=np.float64).reshape(-1)
        if c.shape[0] != self.grid.n_cells:
            raise InvalidArgument(
                f"cells length {c.shape[0]} does not match grid n_cells {self.grid.n_cells}"
            )
        filled = c[~np.isnan(c)]
        if filled.size and (filled.min() < 0.0 or filled.max() > 1.0):
            raise InvalidArgument("non-empty cell values must lie in [0, 1]")
        object.__setattr__(self, "cells", c)

    @property
    def filled_mask(self) -> np.ndarray:
        return ~np.isnan(self.cells)


KIND_SCALAR_MEAN = "scalar_mean"
KIND_SCALAR_MEDIAN = "scalar_median"
KIND_TENSOR = "tensor"
KIND_SPHERICAL = "spherical"
SCALAR_KINDS = (KIND_SCALAR_MEAN, KIND_SCALAR_MEDIAN)
VOLUME_KINDS = SCALAR_KINDS + (KIND_TENSOR, KIND_SPHERICAL)


@dataclass
class Volume:
    """A lattice of per-voxel models plus provenance.

    Payload layout mirrors the on-disk record format so that write/read
    round-trips are bit exact:
      scalar kinds: values (n,) float32 + empty (n,) bool
      tensor:       coeffs (n, 6) float32 + valid (n,) bool
      spherical:    cells (n, n_cells) float32, NaN = empty cell
    """

    lattice: VoxelLattice
    kind: str
    values: np.ndarray | None = None
    empty: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    valid: np.ndarray | None = None
    cells: np.ndarray | None = None
    grid: SphericalGrid | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.lattice.n_voxels
        if self.kind in SCALAR_KINDS:
            if self.values is None or self.empty is None:
                raise InvalidArgument(f"{self.kind} volume needs values and empty arrays")
            self.values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(n)
            self.empty = np.ascontiguousarray(self.empty, dtype=bool).reshape(n)
        elif self.kind == KIND_TENSOR:
            if self.coeffs is None or self.valid is None:
                raise InvalidArgument("tensor volume needs coeffs and valid arrays")
            self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float32).reshape(n, 6)
            self.valid = np.ascontiguousarray(self.valid, dtype=bool).reshape(n)
        elif self.kind == KIND_SPHERICAL:
            if self.cells is None or self.grid is None:
                raise InvalidArgument("spherical volume needs cells array and grid")
            self.cells = np.ascontiguousarray(self.cells, dtype=np.float32).reshape(
                n, self.grid.n_cells
            )
        else:
            raise InvalidArgument(f"unknown volume kind {self.kind!r}")

    @property
    def n_voxels(self) -> int:
        return self.lattice.n_voxels

    def tensor_at(self, i: int) -> SymmetricTensor:
        if self.kind != KIND_TENSOR:
            raise InvalidArgument(f"volume kind is {self.kind}, not tensor")
        if not self.valid[i]:
            return SymmetricTensor.invalid()
        return SymmetricTensor(self.coeffs[i].astype(np.float64))

    def spherical_at(self, i: int) -> SphericalModel:
        if self.kind != KIND_SPHERICAL:
            raise InvalidArgument(f"volume kind is {self.kind}, not spherical")
        return SphericalModel(self.cells[i].astype(np.float64), self.grid)
