"""Scalar extraction from model volumes, direction color-mapping, slice
extraction, and free-view directional image synthesis.

Model lookups for images are nearest-voxel (matching how volumes are
evaluated); images come back as float arrays in [0, 1] plus a validity mask,
with 8-bit PGM/PPM/PNG export helpers.
"""

from __future__ import annotations

import io as _stdio
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import (
    KIND_SPHERICAL,
    KIND_TENSOR,
    SCALAR_KINDS,
    SphericalModel,
    SymmetricTensor,
    Volume,
    VoxelLattice,
)
from .errors import (
    AllCellsEmpty,
    DegenerateFrame,
    InvalidArgument,
    InvalidTensor,
    ModeMismatch,
    UnsupportedVolumeKind,
)
from .evaluate import reproject_many

SLICE_MODES = ("mean", "median", "trace", "dominant", "cell_mean", "cell_max", "normal_color")

_MODE_KINDS = {
    "mean": ("scalar_mean",),
    "median": ("scalar_median",),
    "trace": (KIND_TENSOR,),
    "dominant": (KIND_TENSOR,),
    "cell_mean": (KIND_SPHERICAL,),
    "cell_max": (KIND_SPHERICAL,),
    "normal_color": (KIND_SPHERICAL,),
}


def tensor_trace_intensity(t: SymmetricTensor) -> float:
    """Absolute value of the tensor trace."""
    if not t.valid:
        raise InvalidTensor("trace of an invalid tensor")
    return float(abs(t.coeffs[0] + t.coeffs[1] + t.coeffs[2]))


def _eigvals_3x3(m: np.ndarray) -> tuple[float, float, float]:
    """Closed-form (trigonometric) eigenvalues of a symmetric 3x3 matrix,
    descending."""
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    if p1 == 0.0:
        d = sorted((m[0, 0], m[1, 1], m[2, 2]), reverse=True)
        return d[0], d[1], d[2]
    q = (m[0, 0] + m[1, 1] + m[2, 2]) / 3.0
    p2 = (m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b = (m - q * np.eye(3)) / p
    r = float(np.linalg.det(b)) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    l1 = q + 2.0 * p * math.cos(phi)
    l3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    return l1, 3.0 * q - l1 - l3, l3


def dominant_intensity(t: SymmetricTensor) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and its unit eigenvector.

    Sign convention: the first component over 1e-12 in magnitude is positive.
    Degenerate spectra resolve to the canonical axis of the first maximal
    diagonal entry (identity -> (1, 0, 0)).
    """
    if not t.valid:
        raise InvalidTensor("dominant direction of an invalid tensor")
    m = t.matrix()
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    if p1 == 0.0:
        axis = int(np.argmax(np.diag(m)))
        v = np.zeros(3)
        v[axis] = 1.0
        return float(m[axis, axis]), v
    l1, l2, l3 = _eigvals_3x3(m)
    scale = max(abs(l1), abs(l3), 1e-30)
    # Cayley-Hamilton: columns of (m - l2 I)(m - l3 I) span the l1 eigenspace
    c = (m - l2 * np.eye(3)) @ (m - l3 * np.eye(3))
    norms = np.linalg.norm(c, axis=0)
    best = int(np.argmax(norms))
    if norms[best] <= 1e-9 * scale * scale:
        # l1 ~ l2: any direction in the plane orthogonal to the l3 axis works;
        # take the largest column of the rank-2 projector-like (m - l3 I)
        c = m - l3 * np.eye(3)
        norms = np.linalg.norm(c, axis=0)
        best = int(np.argmax(norms))
    v = c[:, best] / norms[best]
    for comp in v:
        if abs(comp) > 1e-12:
            if comp < 0.0:
                v = -v
            break
    return float(l1), v


def dominant_values_many(coeffs: np.ndarray) -> np.ndarray:
    """Vectorized largest eigenvalue of (n, 6)-packed symmetric tensors."""
    a, b, c = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    d, e, f = coeffs[:, 3], coeffs[:, 4], coeffs[:, 5]
    p1 = d * d + e * e + f * f
    q = (a + b + c) / 3.0
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    safe = np.where(p > 0.0, p, 1.0)
    ba, bb, bc = (a - q) / safe, (b - q) / safe, (c - q) / safe
    bd, be, bf = d / safe, e / safe, f / safe
    det = ba * (bb * bc - bf * bf) - bd * (bd * bc - be * bf) + be * (bd * bf - bb * be)
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    l1 = q + 2.0 * p * np.cos(phi)
    return np.where(p > 0.0, l1, np.maximum(np.maximum(a, b), c))


def spherical_mean_intensity(m: SphericalModel) -> float:
    """Mean over non-empty cells only."""
    filled = m.cells[m.filled_mask]
    if filled.size == 0:
        raise AllCellsEmpty("model has no filled cell")
    return float(filled.mean())


def spherical_max_intensity(m: SphericalModel) -> tuple[float, np.ndarray]:
    """Largest cell value and its cell direction; ties take the smallest
    cell index."""
    if not m.filled_mask.any():
        raise AllCellsEmpty("model has no filled cell")
    vals = np.where(m.filled_mask, m.cells, -np.inf)
    k = int(np.argmax(vals))
    return float(m.cells[k]), m.grid.direction_of(k)


def _hsv_to_rgb(h_deg: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    h = np.mod(h_deg, 360.0) / 60.0
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    table = [
        (v, t, p), (q, v, p), (p, v, t),
        (p, q, v), (t, p, v), (v, p, q),
    ]
    rgb = np.zeros(h.shape + (3,))
    for idx, (r_, g_, b_) in enumerate(table):
        sel = i == idx
        rgb[sel, 0] = np.broadcast_to(r_, h.shape)[sel]
        rgb[sel, 1] = np.broadcast_to(g_, h.shape)[sel]
        rgb[sel, 2] = np.broadcast_to(b_, h.shape)[sel]
    return rgb


def _color_frame(main, ref) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    main = np.asarray(main, dtype=np.float64)
    main = main / np.linalg.norm(main)
    ref = np.asarray(ref, dtype=np.float64)
    ref = ref / np.linalg.norm(ref)
    if abs(float(main @ ref)) > 1.0 - 1e-6:
        raise DegenerateFrame("main and reference directions are nearly parallel")
    ref_p = ref - (ref @ main) * main
    ref_p /= np.linalg.norm(ref_p)
    return main, ref_p, np.cross(main, ref_p)


def direction_color_many(dirs: np.ndarray, main, ref) -> np.ndarray:
    """HSV direction map: saturation grows with deviation from the main
    direction (90 degrees -> 1), hue is the azimuth around it measured from
    the reference, value is 1."""
    main, ref_p, ref2 = _color_frame(main, ref)
    d = np.asarray(dirs, dtype=np.float64)
    cosang = np.clip(d @ main, -1.0, 1.0)
    sat = np.clip(np.degrees(np.arccos(cosang)) / 90.0, 0.0, 1.0)
    hue = np.degrees(np.arctan2(d @ ref2, d @ ref_p))
    return _hsv_to_rgb(hue, sat, np.ones_like(sat))


def direction_color(d, main, ref) -> np.ndarray:
    """RGB triple for a single direction."""
    return direction_color_many(np.asarray(d, dtype=np.float64)[None, :], main, ref)[0]


def perpendicular_reference(main) -> np.ndarray:
    """Deterministic hue reference: the coordinate axis least aligned with
    the main direction, orthogonalized against it."""
    main = np.asarray(main, dtype=np.float64)
    main = main / np.linalg.norm(main)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(main)))] = 1.0
    ref = axis - (axis @ main) * main
    return ref / np.linalg.norm(ref)


def volume_main_direction(volume: Volume) -> np.ndarray:
    """Average of the per-voxel strongest-cell directions of a spherical
    volume (the acquisition's main direction for color-mapping)."""
    if volume.kind != KIND_SPHERICAL:
        raise UnsupportedVolumeKind("main direction needs a spherical volume")
    cells = volume.cells
    filled_rows = ~np.all(np.isnan(cells), axis=1)
    if not filled_rows.any():
        raise AllCellsEmpty("volume has no filled voxel")
    vals = np.where(np.isnan(cells[filled_rows]), -np.inf, cells[filled_rows])
    dirs = volume.grid.points[np.argmax(vals, axis=1)]
    mean = dirs.sum(axis=0)
    n = np.linalg.norm(mean)
    if n < 1e-12:
        raise InvalidArgument("strongest-cell directions cancel out")
    return mean / n


@dataclass(frozen=True)
class SlicePlane:
    """An oriented image plane: pixel (ix, iy) sits at
    origin + pixel_size * (ix * axes[0] + iy * axes[1])."""

    origin: np.ndarray
    axes: tuple[np.ndarray, np.ndarray]
    extent: tuple[int, int]  # (width, height) pixels
    pixel_size: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        a0 = np.asarray(self.axes[0], dtype=np.float64)
        a1 = np.asarray(self.axes[1], dtype=np.float64)
        for a in (a0, a1):
            if abs(np.linalg.norm(a) - 1.0) > 1e-9:
                raise InvalidArgument("plane axes must be unit length")
        if abs(float(a0 @ a1)) > 1e-9:
            raise InvalidArgument("plane axes must be orthogonal")
        object.__setattr__(self, "axes", (a0, a1))
        w, h = self.extent
        if w < 1 or h < 1 or self.pixel_size <= 0:
            raise InvalidArgument("extent must be positive pixels, pixel_size > 0")
        object.__setattr__(self, "extent", (int(w), int(h)))

    def pixel_positions(self) -> np.ndarray:
        """(h*w, 3) world positions in row-major pixel order."""
        w, h = self.extent
        ix, iy = np.meshgrid(np.arange(w), np.arange(h))
        return (
            self.origin[None, :]
            + self.pixel_size * ix.ravel()[:, None] * self.axes[0][None, :]
            + self.pixel_size * iy.ravel()[:, None] * self.axes[1][None, :]
        )


def axis_slice_plane(lattice: VoxelLattice, orientation: str, index: int) -> SlicePlane:
    """Lattice-aligned plane: 'axial' fixes z = index, 'lateral' fixes
    x = index; pixel size equals the lattice spacing."""
    nx, ny, nz = lattice.dims
    if orientation == "axial":
        if not 0 <= index < nz:
            raise InvalidArgument(f"axial index {index} outside [0, {nz})")
        origin = lattice.origin + np.array([0.0, 0.0, index * lattice.spacing])
        return SlicePlane(origin, (np.eye(3)[0], np.eye(3)[1]), (nx, ny), lattice.spacing)
    if orientation == "lateral":
        if not 0 <= index < nx:
            raise InvalidArgument(f"lateral index {index} outside [0, {nx})")
        origin = lattice.origin + np.array([index * lattice.spacing, 0.0, 0.0])
        return SlicePlane(origin, (np.eye(3)[1], np.eye(3)[2]), (ny, nz), lattice.spacing)
    raise InvalidArgument(f"orientation must be axial or lateral, got {orientation!r}")


def free_view_image(volume: Volume, plane: SlicePlane, d) -> tuple[np.ndarray, np.ndarray]:
    """Directional image of the volume as seen from direction ``d``.

    Returns (image, mask), both (height, width); masked-out pixels (no model)
    are 0. Tensor reprojections are clamped to [0, 1].
    """
    if volume.kind not in (KIND_TENSOR, KIND_SPHERICAL):
        raise UnsupportedVolumeKind(
            f"free-view needs a tensor or spherical volume, got {volume.kind}"
        )
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d)
    if n < 1e-6:
        raise InvalidArgument("free-view direction must be non-zero")
    d = d / n
    pos = plane.pixel_positions()
    dirs = np.broadcast_to(d, (pos.shape[0], 3))
    vals, missing = reproject_many(volume, pos, np.ascontiguousarray(dirs))
    if volume.kind == KIND_TENSOR:
        vals = np.clip(vals, 0.0, 1.0)
    vals = np.where(missing, 0.0, vals)
    w, h = plane.extent
    return vals.reshape(h, w), (~missing).reshape(h, w)


def _nearest_voxels(lattice: VoxelLattice, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.rint((positions - lattice.origin) / lattice.spacing).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(lattice.dims)[None, :]), axis=1)
    ny, nz = lattice.dims[1], lattice.dims[2]
    vi = np.where(inside, (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2], 0)
    return vi, inside


def extract_slice(
    volume: Volume, plane: SlicePlane, mode: str, main=None, ref=None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel nearest-voxel scalar (or RGB for normal_color) image.

    Returns (image, mask); image is (h, w) raw model values, or (h, w, 3) for
    normal_color where the color is the strongest-cell direction scaled by
    the voxel's cell mean.
    """
    if mode not in SLICE_MODES:
        raise ModeMismatch(f"unknown slice mode {mode!r}")
    if volume.kind not in _MODE_KINDS[mode]:
        raise ModeMismatch(f"mode {mode!r} incompatible with volume kind {volume.kind}")
    pos = plane.pixel_positions()
    vi, inside = _nearest_voxels(volume.lattice, pos)
    w, h = plane.extent

    if volume.kind in SCALAR_KINDS:
        ok = inside & ~volume.empty[vi]
        img = np.where(ok, volume.values.astype(np.float64)[vi], 0.0)
        return img.reshape(h, w), ok.reshape(h, w)

    if volume.kind == KIND_TENSOR:
        ok = inside & volume.valid[vi]
        c = volume.coeffs.astype(np.float64)[vi]
        if mode == "trace":
            img = np.abs(c[:, 0] + c[:, 1] + c[:, 2])
        else:
            img = dominant_values_many(c)
        img = np.where(ok, img, 0.0)
        return img.reshape(h, w), ok.reshape(h, w)

    cells = volume.cells.astype(np.float64)[vi]
    filled_any = ~np.all(np.isnan(cells), axis=1)
    ok = inside & filled_any
    masked = np.where(np.isnan(cells), -np.inf, cells)
    if mode == "cell_max":
        img = np.where(ok, masked.max(axis=1), 0.0)
        return img.reshape(h, w), ok.reshape(h, w)
    filled_counts = (~np.isnan(cells)).sum(axis=1)
    sums = np.nansum(np.where(np.isnan(cells), 0.0, cells), axis=1)
    means = np.where(ok, sums / np.maximum(filled_counts, 1), 0.0)
    if mode == "cell_mean":
        return means.reshape(h, w), ok.reshape(h, w)

    # normal_color: strongest-cell direction through the color map, value
    # scaled by the voxel's cell mean
    if main is None:
        main = volume_main_direction(volume)
    if ref is None:
        ref = perpendicular_reference(main)
    kmax = np.argmax(masked, axis=1)
    rgb = direction_color_many(volume.grid.points[kmax], main, ref)
    rgb *= means[:, None]
    rgb[~ok] = 0.0
    return rgb.reshape(h, w, 3), ok.reshape(h, w)


def normalize_minmax(img: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Min-max rescale over the masked pixels to [0, 1] for display export."""
    sel = np.ones(img.shape[:2], dtype=bool) if mask is None else mask
    if not sel.any():
        return np.zeros_like(img)
    lo = float(img[sel].min())
    hi = float(img[sel].max())
    if hi <= lo:
        return np.zeros_like(img)
    out = (img - lo) / (hi - lo)
    out[~sel] = 0.0
    return np.clip(out, 0.0, 1.0)


def quantize_u8(img01: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img01, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(img01: np.ndarray, path) -> None:
    """Binary 8-bit grayscale PGM (P5)."""
    u8 = quantize_u8(img01)
    h, w = u8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def write_ppm(rgb01: np.ndarray, path) -> None:
    """Binary 24-bit color PPM (P6)."""
    u8 = quantize_u8(rgb01)
    h, w, _ = u8.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def to_png_bytes(img01: np.ndarray) -> bytes:
    """Deterministic PNG encoding of a [0, 1] grayscale or RGB image."""
    u8 = quantize_u8(img01)
    mode = "L" if u8.ndim == 2 else "RGB"
    buf = _stdio.BytesIO()
    Image.fromarray(u8, mode=mode).save(buf, format="PNG")
    return buf.getvalue()
