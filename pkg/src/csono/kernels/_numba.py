"""numba-compiled voxel kernels.

Everything here is self-contained (no LAPACK calls inside parallel regions):
the 6x6 normal-equation solve uses a hand-rolled Cholesky and the eigenvalue
work a cyclic Jacobi sweep, so results are bit-reproducible across thread
counts and BLAS builds. Per-voxel writes are disjoint, which makes the prange
loops deterministic by construction.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"

_U_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_U_C2 = np.uint64(0xBF58476D1CE4E5B9)
_U_C3 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _U_C2
    z = (z ^ (z >> _S27)) * _U_C3
    return z ^ (z >> _S31)


@njit(cache=True)
def _subsample(winners, cap, state):
    n = winners.shape[0]
    pool = winners.copy()
    for i in range(cap):
        state = state + _U_GAMMA
        r = _mix64(state)
        j = i + np.int64(r % np.uint64(n - i))
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return pool[:cap]


@njit(cache=True)
def _select_voxel(
    cx, cy, cz, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    inv_a, inv_b, inv_c, cap, state,
):
    """Sample indices contributing to the voxel at (cx, cy, cz), sorted
    ascending. In-ellipsoid samples are grouped per ray, the ray's nearest
    sample wins (ties: smallest sample index), rays are ordered by ray id and
    capped by deterministic subsampling."""
    bx = np.int64(np.floor(cx / cell_size)) - qmin[0]
    by = np.int64(np.floor(cy / cell_size)) - qmin[1]
    bz = np.int64(np.floor(cz / cell_size)) - qmin[2]

    m = 0
    for dx in range(-1, 2):
        qx = bx + dx
        if qx < 0 or qx >= qdims[0]:
            continue
        for dy in range(-1, 2):
            qy = by + dy
            if qy < 0 or qy >= qdims[1]:
                continue
            for dz in range(-1, 2):
                qz = bz + dz
                if qz < 0 or qz >= qdims[2]:
                    continue
                b = (qx * qdims[1] + qy) * qdims[2] + qz
                m += starts[b + 1] - starts[b]
    if m == 0:
        return np.empty(0, np.int64)

    cand = np.empty(m, np.int64)
    t = 0
    for dx in range(-1, 2):
        qx = bx + dx
        if qx < 0 or qx >= qdims[0]:
            continue
        for dy in range(-1, 2):
            qy = by + dy
            if qy < 0 or qy >= qdims[1]:
                continue
            for dz in range(-1, 2):
                qz = bz + dz
                if qz < 0 or qz >= qdims[2]:
                    continue
                b = (qx * qdims[1] + qy) * qdims[2] + qz
                for u in range(starts[b], starts[b + 1]):
                    cand[t] = order[u]
                    t += 1
    cand = np.sort(cand)  # ascending sample index => smallest-index tie-break

    rays = np.empty(m, np.int64)
    best = np.empty(m, np.int64)
    best_d2 = np.empty(m, np.float64)
    nr = 0
    for t in range(m):
        j = cand[t]
        ex = (positions[j, 0] - cx) * inv_a
        ey = (positions[j, 1] - cy) * inv_b
        ez = (positions[j, 2] - cz) * inv_c
        if ex * ex + ey * ey + ez * ez > 1.0:
            continue
        ux = positions[j, 0] - cx
        uy = positions[j, 1] - cy
        uz = positions[j, 2] - cz
        d2 = ux * ux + uy * uy + uz * uz
        r = ray_ids[j]
        found = -1
        for u in range(nr):
            if rays[u] == r:
                found = u
                break
        if found < 0:
            rays[nr] = r
            best[nr] = j
            best_d2[nr] = d2
            nr += 1
        elif d2 < best_d2[found]:
            best[found] = j
            best_d2[found] = d2
    if nr == 0:
        return np.empty(0, np.int64)

    by_ray = np.argsort(rays[:nr])  # ray ids are distinct
    winners = np.empty(nr, np.int64)
    for u in range(nr):
        winners[u] = best[by_ray[u]]
    if nr > cap:
        winners = _subsample(winners, cap, state)
    return np.sort(winners)


@njit(cache=True)
def _voxel_state(base_state, vi):
    return _mix64(base_state ^ _mix64(np.uint64(vi + 1)))


@njit(cache=True)
def _jacobi_eigh(a_in, need_vectors):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns (eigenvalues, vectors-as-columns); vectors are identity when
    need_vectors is False.
    """
    n = a_in.shape[0]
    a = a_in.copy()
    v = np.eye(n)
    for _ in range(64):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off < 1e-300:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[p, k] = a[k, p]
                        a[k, q] = s * akp + c * akq
                        a[q, k] = a[k, q]
                if need_vectors:
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
    evals = np.empty(n)
    for k in range(n):
        evals[k] = a[k, k]
    return evals, v


@njit(cache=True)
def _cholesky_solve(a, b):
    """Solve a x = b for symmetric positive-definite a; ok=False on failure."""
    n = a.shape[0]
    L = np.zeros((n, n))
    x = np.zeros(n)
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0 or not np.isfinite(s):
                    return x, False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):  # forward: L y = b
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):  # backward: L^T x = y
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@njit(cache=True, parallel=True)
def reconstruct_scalar(
    intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state, use_median,
):
    ny, nz = dims[1], dims[2]
    n_vox = dims[0] * ny * nz
    values = np.zeros(n_vox, np.float32)
    empty = np.ones(n_vox, np.uint8)
    inv_a, inv_b, inv_c = 1.0 / abc[0], 1.0 / abc[1], 1.0 / abc[2]
    for vi in prange(n_vox):
        ix = vi // (ny * nz)
        rem = vi % (ny * nz)
        iy = rem // nz
        iz = rem % nz
        cx = origin[0] + spacing * ix
        cy = origin[1] + spacing * iy
        cz = origin[2] + spacing * iz
        w = _select_voxel(
            cx, cy, cz, positions, ray_ids, starts, order, qmin, qdims,
            cell_size, inv_a, inv_b, inv_c, cap, _voxel_state(base_state, vi),
        )
        nw = w.shape[0]
        if nw == 0:
            continue
        if use_median:
            vals = np.empty(nw)
            for t in range(nw):
                vals[t] = intensities[w[t]]
            values[vi] = np.median(vals)
        else:
            s = 0.0
            for t in range(nw):
                s += intensities[w[t]]
            values[vi] = s / nw
        empty[vi] = 0
    return values, empty


@njit(cache=True, parallel=True)
def reconstruct_tensor(
    rows, intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
    min_samples, spd_clamp, cond_limit,
):
    ny, nz = dims[1], dims[2]
    n_vox = dims[0] * ny * nz
    coeffs = np.zeros((n_vox, 6), np.float32)
    valid = np.zeros(n_vox, np.uint8)
    inv_a, inv_b, inv_c = 1.0 / abc[0], 1.0 / abc[1], 1.0 / abc[2]
    for vi in prange(n_vox):
        ix = vi // (ny * nz)
        rem = vi % (ny * nz)
        iy = rem // nz
        iz = rem % nz
        cx = origin[0] + spacing * ix
        cy = origin[1] + spacing * iy
        cz = origin[2] + spacing * iz
        w = _select_voxel(
            cx, cy, cz, positions, ray_ids, starts, order, qmin, qdims,
            cell_size, inv_a, inv_b, inv_c, cap, _voxel_state(base_state, vi),
        )
        m = w.shape[0]
        if m < min_samples:
            continue
        a = np.zeros((6, 6))
        b = np.zeros(6)
        for t in range(m):
            j = w[t]
            vj = intensities[j]
            for p in range(6):
                rp = rows[j, p]
                b[p] += rp * vj
                for q in range(p, 6):
                    a[p, q] += rp * rows[j, q]
        for p in range(6):
            for q in range(p):
                a[p, q] = a[q, p]
        evals, _ = _jacobi_eigh(a, False)
        lmin, lmax = evals[0], evals[0]
        for k in range(1, 6):
            if evals[k] < lmin:
                lmin = evals[k]
            if evals[k] > lmax:
                lmax = evals[k]
        if not (lmin > 0.0) or lmax > cond_limit * lmin:
            continue
        x, ok = _cholesky_solve(a, b)
        if not ok:
            continue
        if spd_clamp:
            tm = np.empty((3, 3))
            tm[0, 0] = x[0]
            tm[1, 1] = x[1]
            tm[2, 2] = x[2]
            tm[0, 1] = x[3]
            tm[1, 0] = x[3]
            tm[0, 2] = x[4]
            tm[2, 0] = x[4]
            tm[1, 2] = x[5]
            tm[2, 1] = x[5]
            ev, vec = _jacobi_eigh(tm, True)
            for k in range(3):
                if ev[k] < 0.0:
                    ev[k] = 0.0
            for r in range(3):
                for c in range(3):
                    s = 0.0
                    for k in range(3):
                        s += vec[r, k] * ev[k] * vec[c, k]
                    tm[r, c] = s
            x[0] = tm[0, 0]
            x[1] = tm[1, 1]
            x[2] = tm[2, 2]
            x[3] = 0.5 * (tm[0, 1] + tm[1, 0])
            x[4] = 0.5 * (tm[0, 2] + tm[2, 0])
            x[5] = 0.5 * (tm[1, 2] + tm[2, 1])
        bad = False
        for p in range(6):
            if not np.isfinite(x[p]):
                bad = True
        if bad:
            continue
        for p in range(6):
            coeffs[vi, p] = x[p]
        valid[vi] = 1
    return coeffs, valid


@njit(cache=True, parallel=True)
def reconstruct_spherical(
    cell_ids, intensities, positions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
    n_cells, use_median,
):
    ny, nz = dims[1], dims[2]
    n_vox = dims[0] * ny * nz
    cells = np.full((n_vox, n_cells), np.nan, np.float32)
    inv_a, inv_b, inv_c = 1.0 / abc[0], 1.0 / abc[1], 1.0 / abc[2]
    for vi in prange(n_vox):
        ix = vi // (ny * nz)
        rem = vi % (ny * nz)
        iy = rem // nz
        iz = rem % nz
        cx = origin[0] + spacing * ix
        cy = origin[1] + spacing * iy
        cz = origin[2] + spacing * iz
        w = _select_voxel(
            cx, cy, cz, positions, ray_ids, starts, order, qmin, qdims,
            cell_size, inv_a, inv_b, inv_c, cap, _voxel_state(base_state, vi),
        )
        m = w.shape[0]
        if m == 0:
            continue
        if use_median:
            counts = np.zeros(n_cells, np.int64)
            for t in range(m):
                counts[cell_ids[w[t]]] += 1
            offs = np.zeros(n_cells + 1, np.int64)
            for k in range(n_cells):
                offs[k + 1] = offs[k] + counts[k]
            buf = np.empty(m)
            cursor = offs[:n_cells].copy()
            for t in range(m):
                k = cell_ids[w[t]]
                buf[cursor[k]] = intensities[w[t]]
                cursor[k] += 1
            for k in range(n_cells):
                if counts[k] > 0:
                    cells[vi, k] = np.median(buf[offs[k] : offs[k + 1]])
        else:
            sums = np.zeros(n_cells)
            counts = np.zeros(n_cells, np.int64)
            for t in range(m):
                j = w[t]
                k = cell_ids[j]
                sums[k] += intensities[j]
                counts[k] += 1
            for k in range(n_cells):
                if counts[k] > 0:
                    cells[vi, k] = sums[k] / counts[k]
    return cells


@njit(cache=True, parallel=True)
def voxel_stats(
    intensities, positions, directions, ray_ids,
    starts, order, qmin, qdims, cell_size,
    origin, spacing, dims, abc, cap, base_state,
):
    """Per-voxel subset size, intensity variance, and spherical variance."""
    ny, nz = dims[1], dims[2]
    n_vox = dims[0] * ny * nz
    counts = np.zeros(n_vox, np.int64)
    sigma_int = np.full(n_vox, np.nan)
    sigma_sph = np.full(n_vox, np.nan)
    inv_a, inv_b, inv_c = 1.0 / abc[0], 1.0 / abc[1], 1.0 / abc[2]
    for vi in prange(n_vox):
        ix = vi // (ny * nz)
        rem = vi % (ny * nz)
        iy = rem // nz
        iz = rem % nz
        cx = origin[0] + spacing * ix
        cy = origin[1] + spacing * iy
        cz = origin[2] + spacing * iz
        w = _select_voxel(
            cx, cy, cz, positions, ray_ids, starts, order, qmin, qdims,
            cell_size, inv_a, inv_b, inv_c, cap, _voxel_state(base_state, vi),
        )
        m = w.shape[0]
        counts[vi] = m
        if m == 0:
            continue
        mean = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for t in range(m):
            j = w[t]
            mean += intensities[j]
            mx += directions[j, 0]
            my += directions[j, 1]
            mz += directions[j, 2]
        mean /= m
        mx /= m
        my /= m
        mz /= m
        var = 0.0
        for t in range(m):
            dv = intensities[w[t]] - mean
            var += dv * dv
        sigma_int[vi] = var / m
        sigma_sph[vi] = 2.0 * (1.0 - np.sqrt(mx * mx + my * my + mz * mz))
    return counts, sigma_int, sigma_sph


@njit(cache=True, parallel=True)
def reproject_scalar(values, empty, origin, spacing, dims, positions):
    """Trilinear interpolation excluding empty voxels (weights renormalized)."""
    ns = positions.shape[0]
    out = np.zeros(ns)
    missing = np.zeros(ns, np.uint8)
    ny, nz = dims[1], dims[2]
    for s in prange(ns):
        gx = (positions[s, 0] - origin[0]) / spacing
        gy = (positions[s, 1] - origin[1]) / spacing
        gz = (positions[s, 2] - origin[2]) / spacing
        bx = np.int64(np.floor(gx))
        by = np.int64(np.floor(gy))
        bz = np.int64(np.floor(gz))
        fx = gx - bx
        fy = gy - by
        fz = gz - bz
        wsum = 0.0
        vsum = 0.0
        for dx in range(2):
            ix = bx + dx
            if ix < 0 or ix >= dims[0]:
                continue
            wx = fx if dx == 1 else 1.0 - fx
            for dy in range(2):
                iy = by + dy
                if iy < 0 or iy >= ny:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dz in range(2):
                    iz = bz + dz
                    if iz < 0 or iz >= nz:
                        continue
                    wz = fz if dz == 1 else 1.0 - fz
                    vi = (ix * ny + iy) * nz + iz
                    if empty[vi]:
                        continue
                    wgt = wx * wy * wz
                    wsum += wgt
                    vsum += wgt * values[vi]
        if wsum > 0.0:
            out[s] = vsum / wsum
        else:
            missing[s] = 1
    return out, missing


@njit(cache=True, parallel=True)
def reproject_tensor(coeffs, valid, origin, spacing, dims, positions, directions):
    """Quadratic form of the nearest valid-tensor voxel."""
    ns = positions.shape[0]
    out = np.zeros(ns)
    missing = np.zeros(ns, np.uint8)
    ny, nz = dims[1], dims[2]
    for s in prange(ns):
        ix = np.int64(np.rint((positions[s, 0] - origin[0]) / spacing))
        iy = np.int64(np.rint((positions[s, 1] - origin[1]) / spacing))
        iz = np.int64(np.rint((positions[s, 2] - origin[2]) / spacing))
        if ix < 0 or ix >= dims[0] or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            missing[s] = 1
            continue
        vi = (ix * ny + iy) * nz + iz
        if not valid[vi]:
            missing[s] = 1
            continue
        dx = directions[s, 0]
        dy = directions[s, 1]
        dz = directions[s, 2]
        xx = np.float64(coeffs[vi, 0])
        yy = np.float64(coeffs[vi, 1])
        zz = np.float64(coeffs[vi, 2])
        xy = np.float64(coeffs[vi, 3])
        xz = np.float64(coeffs[vi, 4])
        yz = np.float64(coeffs[vi, 5])
        out[s] = (
            xx * dx * dx + yy * dy * dy + zz * dz * dz
            + 2.0 * (xy * dx * dy + xz * dx * dz + yz * dy * dz)
        )
    return out, missing


@njit(cache=True, parallel=True)
def reproject_spherical(cells, origin, spacing, dims, positions, cell_ids):
    """Cell value at the nearest voxel; empty cells fall back to the mean of
    that voxel's non-empty cells."""
    ns = positions.shape[0]
    out = np.zeros(ns)
    missing = np.zeros(ns, np.uint8)
    ny, nz = dims[1], dims[2]
    n_cells = cells.shape[1]
    for s in prange(ns):
        ix = np.int64(np.rint((positions[s, 0] - origin[0]) / spacing))
        iy = np.int64(np.rint((positions[s, 1] - origin[1]) / spacing))
        iz = np.int64(np.rint((positions[s, 2] - origin[2]) / spacing))
        if ix < 0 or ix >= dims[0] or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            missing[s] = 1
            continue
        vi = (ix * ny + iy) * nz + iz
        v = np.float64(cells[vi, cell_ids[s]])
        if np.isnan(v):
            acc = 0.0
            cnt = 0
            for k in range(n_cells):
                ck = np.float64(cells[vi, k])
                if not np.isnan(ck):
                    acc += ck
                    cnt += 1
            if cnt == 0:
                missing[s] = 1
                continue
            v = acc / cnt
        out[s] = v
    return out, missing
