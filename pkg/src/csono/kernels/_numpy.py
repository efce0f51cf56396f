"""Pure-numpy fallback for the voxel kernels.

Same signatures and same selection semantics as the numba backend, checked by
the cross-backend tests. The voxel loop is plain Python with vectorized inner
work, so it is an order of magnitude slower; it exists for environments
without a working numba and as a second, independent implementation of the
hot path.
"""

from __future__ import annotations

import numpy as np

from ._common import mix64, solve_tensor, subsample_py

NAME = "numpy"

_MASK64 = (1 << 64) - 1


def _voxel_state(base_state: int, vi: int) -> int:
    return mix64((int(base_state) ^ mix64(vi + 1)) & _MASK64)


def _voxel_centers(origin, spacing, dims):
    ny, nz = int(dims[1]), int(dims[2])
    n_vox = int(dims[0]) * ny * nz
    vi = np.arange(n_vox)
    ix, rem = np.divmod(vi, ny * nz)
    iy, iz = np.divmod(rem, nz)
    return origin[None, :] + spacing * np.stack([ix, iy, iz], axis=1).astype(np.float64)


def _candidates(center, starts, order, qmin, qdims, cell_size):
    b = np.floor(center / cell_size).astype(np.int64) - qmin
    chunks = []
    for dx in (-1, 0, 1):
        qx = b[0] + dx
        if qx < 0 or qx >= qdims[0]:
            continue
        for dy in (-1, 0, 1):
            qy = b[1] + dy
            if qy < 0 or qy >= qdims[1]:
                continue
            for dz in (-1, 0, 1):
                qz = b[2] + dz
                if qz < 0 or qz >= qdims[2]:
                    continue
                lin = (qx * qdims[1] + qy) * qdims[2] + qz
                lo, hi = starts[lin], starts[lin + 1]
                if hi > lo:
                    chunks.append(order[lo:hi])
    if not chunks:
        return np.empty(0, np.int64)
    return np.sort(np.concatenate(chunks))


def _select_voxel(
    center, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    abc, cap, state,
):
    cand = _candidates(center, starts, order, qmin, qdims, cell_size)
    if cand.size == 0:
        return cand
    rel = (positions[cand] - center) / abc
    inside = cand[(rel * rel).sum(axis=1) <= 1.0]
    if inside.size == 0:
        return inside
    diff = positions[inside] - center
    d2 = (diff * diff).sum(axis=1)
    rays = ray_ids[inside]
    # per ray keep nearest, ties to smallest sample index; output ray-ordered
    by = np.lexsort((inside, d2, rays))
    rays_o = rays[by]
    first = np.ones(rays_o.shape[0], dtype=bool)
    first[1:] = rays_o[1:] != rays_o[:-1]
    winners = inside[by][first]
    if winners.shape[0] > cap:
        winners = subsample_py(winners, cap, state)
    return np.sort(winners)


def _iter_voxels(positions, ray_ids, starts, order, qmin, qdims, cell_size,
                 origin, spacing, dims, abc, cap, base_state):
    centers = _voxel_centers(origin, spacing, dims)
    abc = np.asarray(abc, dtype=np.float64)
    for vi in range(centers.shape[0]):
        yield vi, _select_voxel(
            centers[vi], positions, ray_ids, starts, order, qmin, qdims,
            cell_size, abc, cap, _voxel_state(int(base_state), vi),
        )


def reconstruct_scalar(
    intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state, use_median,
):
    n_vox = int(dims[0] * dims[1] * dims[2])
    values = np.zeros(n_vox, np.float32)
    empty = np.ones(n_vox, np.uint8)
    for vi, w in _iter_voxels(positions, ray_ids, starts, order, qmin, qdims,
                              cell_size, origin, spacing, dims, abc, cap, base_state):
        if w.size == 0:
            continue
        vals = intensities[w]
        values[vi] = np.median(vals) if use_median else vals.sum() / vals.size
        empty[vi] = 0
    return values, empty


def reconstruct_tensor(
    rows, intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
    min_samples, spd_clamp, cond_limit,
):
    n_vox = int(dims[0] * dims[1] * dims[2])
    coeffs = np.zeros((n_vox, 6), np.float32)
    valid = np.zeros(n_vox, np.uint8)
    for vi, w in _iter_voxels(positions, ray_ids, starts, order, qmin, qdims,
                              cell_size, origin, spacing, dims, abc, cap, base_state):
        if w.size < min_samples:
            continue
        x, ok = solve_tensor(rows[w], intensities[w], spd_clamp, cond_limit)
        if not ok:
            continue
        coeffs[vi] = x
        valid[vi] = 1
    return coeffs, valid


def reconstruct_spherical(
    cell_ids, intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
    n_cells, use_median,
):
    n_vox = int(dims[0] * dims[1] * dims[2])
    cells = np.full((n_vox, n_cells), np.nan, np.float32)
    for vi, w in _iter_voxels(positions, ray_ids, starts, order, qmin, qdims,
                              cell_size, origin, spacing, dims, abc, cap, base_state):
        if w.size == 0:
            continue
        cids = cell_ids[w]
        vals = intensities[w]
        if use_median:
            for k in np.unique(cids):
                cells[vi, k] = np.median(vals[cids == k])
        else:
            counts = np.bincount(cids, minlength=n_cells)
            sums = np.bincount(cids, weights=vals, minlength=n_cells)
            filled = counts > 0
            cells[vi, filled] = sums[filled] / counts[filled]
    return cells


def voxel_stats(
    intensities, positions, directions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
):
    n_vox = int(dims[0] * dims[1] * dims[2])
    counts = np.zeros(n_vox, np.int64)
    sigma_int = np.full(n_vox, np.nan)
    sigma_sph = np.full(n_vox, np.nan)
    for vi, w in _iter_voxels(positions, ray_ids, starts, order, qmin, qdims,
                              cell_size, origin, spacing, dims, abc, cap, base_state):
        counts[vi] = w.size
        if w.size == 0:
            continue
        vals = intensities[w]
        mean = vals.sum() / vals.size
        sigma_int[vi] = ((vals - mean) ** 2).sum() / vals.size
        mdir = directions[w].sum(axis=0) / w.size
        sigma_sph[vi] = 2.0 * (1.0 - np.sqrt((mdir * mdir).sum()))
    return counts, sigma_int, sigma_sph


def reproject_scalar(values, empty, origin, spacing, dims, positions):
    ns = positions.shape[0]
    g = (positions - origin) / spacing
    base = np.floor(g).astype(np.int64)
    frac = g - base
    wsum = np.zeros(ns)
    vsum = np.zeros(ns)
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    vals64 = values.astype(np.float64)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                ix = base[:, 0] + dx
                iy = base[:, 1] + dy
                iz = base[:, 2] + dz
                ok = (
                    (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
                    & (iz >= 0) & (iz < nz)
                )
                vi = np.where(ok, (ix * ny + iy) * nz + iz, 0)
                ok &= ~empty.astype(bool)[vi]
                wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
                wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                wgt = np.where(ok, wx * wy * wz, 0.0)
                wsum += wgt
                vsum += wgt * vals64[vi]
    missing = wsum <= 0.0
    out = np.divide(vsum, wsum, out=np.zeros(ns), where=~missing)
    return out, missing.astype(np.uint8)


def _nearest_voxel(origin, spacing, dims, positions):
    idx = np.rint((positions - origin) / spacing).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.asarray(dims)[None, :]), axis=1)
    ny, nz = int(dims[1]), int(dims[2])
    vi = np.where(ok, (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2], 0)
    return vi, ok


def reproject_tensor(coeffs, valid, origin, spacing, dims, positions, directions):
    vi, ok = _nearest_voxel(origin, spacing, dims, positions)
    ok &= valid.astype(bool)[vi]
    c = coeffs.astype(np.float64)[vi]
    dx, dy, dz = directions[:, 0], directions[:, 1], directions[:, 2]
    out = (
        c[:, 0] * dx * dx + c[:, 1] * dy * dy + c[:, 2] * dz * dz
        + 2.0 * (c[:, 3] * dx * dy + c[:, 4] * dx * dz + c[:, 5] * dy * dz)
    )
    out[~ok] = 0.0
    return out, (~ok).astype(np.uint8)


def reproject_spherical(cells, origin, spacing, dims, positions, cell_ids):
    vi, ok = _nearest_voxel(origin, spacing, dims, positions)
    rows = cells.astype(np.float64)[vi]
    out = rows[np.arange(rows.shape[0]), cell_ids]
    hole = np.isnan(out) & ok
    if hole.any():
        sub = rows[hole]
        filled = ~np.isnan(sub)
        cnt = filled.sum(axis=1)
        sums = np.where(filled, sub, 0.0).sum(axis=1)
        out[hole] = np.where(cnt > 0, sums / np.maximum(cnt, 1), np.nan)
    missing = ~ok | np.isnan(out)
    out[missing] = 0.0
    return out, missing.astype(np.uint8)
