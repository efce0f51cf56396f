"""Spherical grids: constructions, direction<->cell mappings, directional statistics.

Three partitions of the unit sphere are supported. Each is defined by a set of
grid points; the (implicit) Voronoi cells of those points partition the sphere,
and ``cell_of`` returns the index of the angularly nearest grid point, which is
exactly the Voronoi cell containing the direction.

Grids are cheap to rebuild from ``(scheme, param)``, which is what gets
serialized; the point arrays are never stored on disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDirection,
    EmptyInput,
    IndexOutOfRange,
    InvalidArgument,
    InvalidResolution,
    ResourceLimit,
)

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

SCHEME_LAT_LONG = "lat_long"
SCHEME_ICOSAHEDRAL = "icosahedral"
SCHEME_FIBONACCI = "fibonacci"

_MAX_ICO_VERTICES = 10**7


@dataclass(frozen=True)
class SphericalGrid:
    """A partition of the unit sphere into ``n_cells`` directional segments.

    ``points`` holds the unit grid points, one per cell; ``param`` is the
    scheme-specific resolution parameter (degrees, subdivision level, or point
    count) from which the grid can be rebuilt deterministically.
    """

    scheme: str
    param: float
    points: np.ndarray = field(repr=False)
    pre_collapse_n: int | None = None

    @property
    def n_cells(self) -> int:
        return self.points.shape[0]

    def direction_of(self, k: int) -> np.ndarray:
        return direction_of(self, k)

    def cell_of(self, d) -> int:
        return cell_of(self, d)

    def cell_of_many(self, dirs: np.ndarray) -> np.ndarray:
        return cell_of_many(self, dirs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SphericalGrid)
            and self.scheme == other.scheme
            and self.param == other.param
            and self.n_cells == other.n_cells
        )

    def __hash__(self) -> int:
        return hash((self.scheme, self.param))


def build_lat_long(resolution_deg: float) -> SphericalGrid:
    """Equiangular sampling of elevation and azimuth.

    Elevation rows run 0..180 deg in steps of ``resolution_deg``; azimuth
    columns run 0..360-resolution. The two pole rows, which the raw sampling
    duplicates once per azimuth column, are collapsed to a single point each so
    that cell lookup stays well defined. The duplicated count is kept in
    ``pre_collapse_n``.
    """
    if resolution_deg <= 0:
        raise InvalidResolution(f"resolution must be positive, got {resolution_deg}")
    steps = 180.0 / resolution_deg
    if abs(steps - round(steps)) > 1e-9:
        raise InvalidResolution(f"{resolution_deg} deg does not divide 180 evenly")
    steps = int(round(steps))
    cols = 2 * steps  # 360 / resolution

    res = math.radians(resolution_deg)
    pts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, steps):
        theta = i * res
        st, ct = math.sin(theta), math.cos(theta)
        for j in range(cols):
            phi = j * res
            pts.append(np.array([st * math.cos(phi), st * math.sin(phi), ct]))
    pts.append(np.array([0.0, 0.0, -1.0]))
    points = np.asarray(pts, dtype=np.float64)
    return SphericalGrid(
        scheme=SCHEME_LAT_LONG,
        param=float(resolution_deg),
        points=points,
        pre_collapse_n=(steps + 1) * cols,
    )


# Icosahedron vertices (unnormalized) and faces, a fixed canonical pairing.
_ICO_VERTS = np.array(
    [
        [-1, GOLDEN_RATIO, 0], [1, GOLDEN_RATIO, 0], [-1, -GOLDEN_RATIO, 0],
        [1, -GOLDEN_RATIO, 0], [0, -1, GOLDEN_RATIO], [0, 1, GOLDEN_RATIO],
        [0, -1, -GOLDEN_RATIO], [0, 1, -GOLDEN_RATIO], [GOLDEN_RATIO, 0, -1],
        [GOLDEN_RATIO, 0, 1], [-GOLDEN_RATIO, 0, -1], [-GOLDEN_RATIO, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def build_icosahedral(subdivisions: int) -> SphericalGrid:
    """Icosahedron vertices refined by edge-midpoint subdivision.

    Every iteration splits each triangle edge at its midpoint (shared between
    the two adjacent faces), projects the new vertex onto the sphere, and
    replaces each face by four. Vertex count is 10 * 4**s + 2.
    """
    if subdivisions < 0:
        raise InvalidArgument(f"subdivisions must be >= 0, got {subdivisions}")
    expected = 10 * 4**subdivisions + 2
    if expected > _MAX_ICO_VERTICES:
        raise ResourceLimit(
            f"subdivision level {subdivisions} needs {expected} vertices "
            f"(limit {_MAX_ICO_VERTICES})"
        )

    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(subdivisions):
        midpoint_of: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint_of.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                idx = len(verts)
                verts.append(m)
                midpoint_of[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = new_faces

    points = np.asarray(verts, dtype=np.float64)
    assert points.shape[0] == expected
    return SphericalGrid(scheme=SCHEME_ICOSAHEDRAL, param=float(subdivisions), points=points)


def build_fibonacci(n_cells: int) -> SphericalGrid:
    """Points along the golden-angle spiral.

    Point k sits at azimuth 2*pi*k/GOLDEN_RATIO (mod 2*pi) and height
    z_k = 1 - (2k + 1) / n_cells.
    """
    if n_cells < 1:
        raise InvalidArgument(f"n_cells must be >= 1, got {n_cells}")
    k = np.arange(n_cells, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / n_cells
    phi = 2.0 * np.pi * np.mod(k / GOLDEN_RATIO, 1.0)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    points = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    return SphericalGrid(scheme=SCHEME_FIBONACCI, param=float(n_cells), points=points)


def build_grid(scheme: str, param: float) -> SphericalGrid:
    """Rebuild a grid from its serialized (scheme, param) pair."""
    if scheme == SCHEME_LAT_LONG:
        return build_lat_long(param)
    if scheme == SCHEME_ICOSAHEDRAL:
        return build_icosahedral(int(param))
    if scheme == SCHEME_FIBONACCI:
        return build_fibonacci(int(param))
    raise InvalidArgument(f"unknown grid scheme {scheme!r}")


def direction_of(grid: SphericalGrid, k: int) -> np.ndarray:
    """Euclidean unit vector of grid point ``k``."""
    if not 0 <= k < grid.n_cells:
        raise IndexOutOfRange(f"cell {k} out of range [0, {grid.n_cells})")
    return grid.points[k].copy()


def _normalized_dirs(dirs) -> np.ndarray:
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if d.ndim != 2 or d.shape[1] != 3:
        raise InvalidArgument(f"expected directions of shape (n, 3), got {d.shape}")
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms < 1e-6):
        raise DegenerateDirection("direction norm below 1e-6")
    return d / norms[:, None]


def _pick_nearest(grid: SphericalGrid, dirs: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Among candidate cell indices (per row, ascending), pick the one whose
    grid point has the largest dot product; ties keep the smallest index."""
    dots = np.einsum("mcx,mx->mc", grid.points[cand], dirs)
    best = cand[:, 0].copy()
    best_dot = dots[:, 0].copy()
    for c in range(1, cand.shape[1]):
        better = dots[:, c] > best_dot
        best[better] = cand[better, c]
        best_dot[better] = dots[better, c]
    return best


def _cell_of_lat_long(grid: SphericalGrid, dirs: np.ndarray) -> np.ndarray:
    steps = int(round(180.0 / grid.param))
    cols = 2 * steps
    res = math.radians(grid.param)

    poles = np.broadcast_to(np.array([0, grid.n_cells - 1]), (len(dirs), 2))
    if steps == 1:  # resolution 180: the two poles are the whole grid
        return _pick_nearest(grid, dirs, np.ascontiguousarray(poles))

    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
    row = np.rint(theta / res).astype(np.int64)
    col = np.rint(phi / res).astype(np.int64)

    # Nearest-by-angle can disagree with independent rounding near the poles,
    # so check a 3x3 ring neighborhood plus both poles explicitly.
    rows = np.clip(row[:, None] + np.array([-1, 0, 1]), 1, steps - 1)
    cols_nb = np.mod(col[:, None] + np.array([-1, 0, 1]), cols)
    ring = (1 + (rows[:, :, None] - 1) * cols + cols_nb[:, None, :]).reshape(len(dirs), 9)
    cand = np.sort(np.concatenate([ring, poles], axis=1), axis=1)
    return _pick_nearest(grid, dirs, cand)


def _cell_of_fibonacci(grid: SphericalGrid, dirs: np.ndarray) -> np.ndarray:
    """Constant-time inverse of the spiral construction.

    Locates the local lattice cell of the spiral around the query direction
    and tests its four corner indices (plus both spiral endpoints, which the
    local frame degenerates at). The nearest grid point is always among those
    candidates, so the result matches exhaustive search exactly.
    """
    n = grid.n_cells
    if n <= 16:
        return _cell_of_brute(grid, dirs)

    phi = np.minimum(np.arctan2(dirs[:, 1], dirs[:, 0]), np.pi)
    cos_theta = dirs[:, 2]

    arg = n * np.pi * math.sqrt(5.0) * np.maximum(1.0 - cos_theta**2, 1e-300)
    k = np.maximum(2.0, np.floor(np.log(arg) / math.log(GOLDEN_RATIO + 1.0)))
    fk = GOLDEN_RATIO**k / math.sqrt(5.0)
    f0 = np.rint(fk)
    f1 = np.rint(fk * GOLDEN_RATIO)

    # Local lattice basis in (azimuth, z) coordinates around the query point.
    ka0, ka1 = 2.0 * f0 / n, 2.0 * f1 / n
    kb0 = 2.0 * np.pi * (np.mod((f0 + 1.0) * GOLDEN_RATIO, 1.0) - (GOLDEN_RATIO - 1.0))
    kb1 = 2.0 * np.pi * (np.mod((f1 + 1.0) * GOLDEN_RATIO, 1.0) - (GOLDEN_RATIO - 1.0))
    det = ka1 * kb0 - ka0 * kb1
    z_off = cos_theta - (1.0 - 1.0 / n)
    c0 = np.floor((ka1 * phi + kb1 * z_off) / det)
    c1 = np.floor((-ka0 * phi - kb0 * z_off) / det)

    corners = [
        f0 * (c0 + u) + f1 * (c1 + v) for u, v in ((0, 0), (1, 0), (0, 1), (1, 1))
    ]
    cand = np.stack(corners, axis=1)
    cand = np.clip(np.rint(cand), 0, n - 1).astype(np.int64)
    endpoints = np.broadcast_to(np.array([0, n - 1]), (len(dirs), 2))
    cand = np.sort(np.concatenate([cand, endpoints], axis=1), axis=1)
    return _pick_nearest(grid, dirs, cand)


def _cell_of_brute(grid: SphericalGrid, dirs: np.ndarray) -> np.ndarray:
    out = np.empty(len(dirs), dtype=np.int64)
    chunk = max(1, 2**22 // max(grid.n_cells, 1))
    for lo in range(0, len(dirs), chunk):
        dots = dirs[lo : lo + chunk] @ grid.points.T
        out[lo : lo + chunk] = np.argmax(dots, axis=1)
    return out


def cell_of_many(grid: SphericalGrid, dirs) -> np.ndarray:
    """Vectorized ``cell_of`` over an (n, 3) array of directions."""
    d = _normalized_dirs(dirs)
    if grid.scheme == SCHEME_LAT_LONG:
        return _cell_of_lat_long(grid, d)
    if grid.scheme == SCHEME_FIBONACCI:
        return _cell_of_fibonacci(grid, d)
    return _cell_of_brute(grid, d)


def cell_of(grid: SphericalGrid, d) -> int:
    """Index of the grid point nearest to ``d`` in angular distance.

    Ties resolve to the smallest index. ``d`` is renormalized internally;
    norms below 1e-6 raise DegenerateDirection.
    """
    return int(cell_of_many(grid, np.asarray(d, dtype=np.float64)[None, :])[0])


def spherical_variance(directions) -> float:
    """Dispersion of unit directions: 2 * (1 - mean resultant length).

    0 when all directions coincide, 2 when they cancel out (e.g. antipodal
    pairs or uniform coverage).
    """
    d = np.asarray(directions, dtype=np.float64)
    if d.size == 0:
        raise EmptyInput("spherical_variance needs at least one direction")
    d = np.atleast_2d(d)
    r_bar = float(np.linalg.norm(d.mean(axis=0)))
    return 2.0 * (1.0 - r_bar)


def cell_area_stats(grid: SphericalGrid, n_mc: int, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo solid-angle estimate per Voronoi cell.

    Returns (mean cell area, max/min cell area ratio). The mean times
    ``n_cells`` is 4*pi by construction; the ratio quantifies how far the
    partition is from equal-area.
    """
    if n_mc < 10**4:
        raise InvalidArgument(f"n_mc must be >= 1e4, got {n_mc}")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_mc, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    cells = cell_of_many(grid, dirs)
    counts = np.bincount(cells, minlength=grid.n_cells).astype(np.float64)
    areas = 4.0 * np.pi * counts / n_mc
    ratio = float(areas.max() / areas.min()) if areas.min() > 0 else math.inf
    return float(areas.mean()), ratio
