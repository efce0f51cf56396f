"""Pieces shared by the two kernel backends.

The deterministic per-voxel subsampling stream (splitmix64) is implemented
twice, here in plain Python and again under numba; both must produce the same
uint64 sequence bit for bit, which the kernel test suite asserts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ResourceLimit

_MASK64 = (1 << 64) - 1

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX_C2 = 0xBF58476D1CE4E5B9
_MIX_C3 = 0x94D049BB133111EB

TENSOR_COND_LIMIT = 1e12


def mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_C2) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_C3) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for byte in s.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def subsample_base_state(sweep_id: str, seed: int) -> int:
    """Root state of the cap-subsampling streams; each voxel derives its own
    stream from this and its voxel index."""
    return mix64(fnv1a64(sweep_id) ^ mix64(seed & _MASK64))


def voxel_state(base_state: int, voxel_index: int) -> int:
    return mix64((base_state ^ mix64(voxel_index + 1)) & _MASK64)


def subsample_py(winners: np.ndarray, cap: int, state: int) -> np.ndarray:
    """Uniform subsample without replacement via partial Fisher-Yates.

    Twin of the numba implementation; keep the arithmetic identical.
    """
    n = winners.shape[0]
    pool = winners.copy()
    for i in range(cap):
        state = (state + SPLITMIX_GAMMA) & _MASK64
        r = mix64(state)
        j = i + r % (n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:cap]


@dataclass(frozen=True)
class SpatialHash:
    """Uniform binning of sample positions; bins are CSR slices into ``order``.

    Bin size equals the largest ellipsoid semi-axis, so every sample that can
    influence a voxel lies in the 3x3x3 bin neighborhood of that voxel.
    """

    cell_size: float
    qmin: np.ndarray  # (3,) int64
    qdims: np.ndarray  # (3,) int64
    starts: np.ndarray  # (n_bins + 1,) int64
    order: np.ndarray  # (n,) int64, bin-major, ascending sample index within a bin


def build_hash(positions: np.ndarray, cell_size: float) -> SpatialHash:
    q = np.floor(positions / cell_size).astype(np.int64)
    qmin = q.min(axis=0)
    qdims = q.max(axis=0) - qmin + 1
    n_bins = int(qdims[0] * qdims[1] * qdims[2])
    if n_bins > 2 * 10**8:
        raise ResourceLimit(f"spatial hash would need {n_bins} bins")
    rel = q - qmin
    bins = (rel[:, 0] * qdims[1] + rel[:, 1]) * qdims[2] + rel[:, 2]
    order = np.argsort(bins, kind="stable").astype(np.int64)
    counts = np.bincount(bins, minlength=n_bins)
    starts = np.zeros(n_bins + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return SpatialHash(float(cell_size), qmin, qdims, starts, order)


def design_rows(directions: np.ndarray) -> np.ndarray:
    """Per-sample linear-system row of the quadratic-form fit:
    (dx^2, dy^2, dz^2, 2 dx dy, 2 dx dz, 2 dy dz)."""
    dx, dy, dz = directions[:, 0], directions[:, 1], directions[:, 2]
    return np.stack(
        [dx * dx, dy * dy, dz * dz, 2 * dx * dy, 2 * dx * dz, 2 * dy * dz], axis=1
    )


def solve_tensor(
    rows: np.ndarray,
    vals: np.ndarray,
    spd_clamp: bool,
    cond_limit: float = TENSOR_COND_LIMIT,
) -> tuple[np.ndarray, bool]:
    """Least-squares tensor coefficients via the normal equations.

    Returns (coeffs, ok); ok is False when the normal matrix is numerically
    singular (eigenvalue-ratio condition estimate beyond ``cond_limit``), the
    Cholesky factorization fails, or the solution is non-finite.
    """
    a = np.einsum("mi,mj->ij", rows, rows)
    b = rows.T @ vals
    evals = np.linalg.eigvalsh(a)
    lmin, lmax = evals[0], evals[-1]
    if not (lmin > 0.0) or lmax > cond_limit * lmin:
        return np.zeros(6), False
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.zeros(6), False
    y = np.linalg.solve(lower, b)
    x = np.linalg.solve(lower.T, y)
    if spd_clamp:
        tm = np.array(
            [[x[0], x[3], x[4]], [x[3], x[1], x[5]], [x[4], x[5], x[2]]]
        )
        ev, vec = np.linalg.eigh(tm)
        tm = (vec * np.maximum(ev, 0.0)) @ vec.T
        x = np.array([tm[0, 0], tm[1, 1], tm[2, 2], tm[0, 1], tm[0, 2], tm[1, 2]])
    if not np.all(np.isfinite(x)):
        return np.zeros(6), False
    return x, True
