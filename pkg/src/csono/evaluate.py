"""Reprojection of model volumes at sample poses and representation-error
analysis.

Scalar volumes reproject by trilinear interpolation (empty voxels excluded,
weights renormalized); tensor and spherical volumes evaluate the model stored
at the nearest voxel. Samples whose reprojection is undefined are Missing and
either skipped or scored against 0, depending on ``skip_missing``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import KIND_SPHERICAL, KIND_TENSOR, SCALAR_KINDS, Sample, Sweep, Volume
from .errors import EmptySubset, InvalidArgument
from .grids import cell_of_many
from .kernels import active, build_hash, subsample_base_state
from .selection import SampleSubset, SelectionEllipsoid

BIN_AXES = ("intensity_var", "spherical_var")
SPHERICAL_VAR_RANGE = (0.0, 2.0)


def reproject_many(
    volume: Volume, positions: np.ndarray, directions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batch reprojection; returns (values, missing mask)."""
    lat = volume.lattice
    dims = np.asarray(lat.dims, dtype=np.int64)
    if volume.kind in SCALAR_KINDS:
        vals, miss = active.reproject_scalar(
            volume.values, volume.empty.astype(np.uint8),
            lat.origin, lat.spacing, dims, positions,
        )
    elif volume.kind == KIND_TENSOR:
        vals, miss = active.reproject_tensor(
            volume.coeffs, volume.valid.astype(np.uint8),
            lat.origin, lat.spacing, dims, positions, directions,
        )
    elif volume.kind == KIND_SPHERICAL:
        cell_ids = cell_of_many(volume.grid, directions)
        vals, miss = active.reproject_spherical(
            volume.cells, lat.origin, lat.spacing, dims, positions, cell_ids,
        )
    else:  # pragma: no cover
        raise InvalidArgument(f"unknown volume kind {volume.kind!r}")
    return vals, miss.astype(bool)


def reproject(volume: Volume, s: Sample) -> float | None:
    """Model intensity at the sample's position and direction; None when the
    volume holds no usable model there (Missing)."""
    vals, miss = reproject_many(volume, s.position[None, :], s.direction[None, :])
    return None if miss[0] else float(vals[0])


def intensity_variance(subset: SampleSubset) -> float:
    """Population variance of the subset's intensities."""
    if subset.count == 0:
        raise EmptySubset("variance of an empty subset")
    v = subset.intensities
    return float(((v - v.mean()) ** 2).mean())


@dataclass
class BinRow:
    bin_center: float
    mse: float
    count: int


@dataclass
class ErrorReport:
    """Per-sample squared reprojection errors plus summary statistics."""

    method: str
    params: dict
    skip_missing: bool
    squared_errors: np.ndarray  # per evaluated sample
    evaluated_count: int
    missing_count: int
    total_count: int
    mse: float
    sigma_int: np.ndarray | None = None  # per voxel, NaN where subset empty
    sigma_sph: np.ndarray | None = None
    bins: list[BinRow] | None = None

    def summary(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "skip_missing": self.skip_missing,
            "mse": self.mse,
            "evaluated_count": self.evaluated_count,
            "missing_count": self.missing_count,
            "total_count": self.total_count,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")

    def write_csv(self, path) -> None:
        """Binned series as CSV with columns bin_center, mse, count."""
        if self.bins is None:
            raise InvalidArgument("report has no binned series; run binned_error first")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_center", "mse", "count"])
            for row in self.bins:
                w.writerow([repr(row.bin_center), repr(row.mse), row.count])


def _selection_params(volume: Volume) -> tuple[SelectionEllipsoid, int, int]:
    p = volume.provenance
    abc = p.get("ellipsoid", [1.0, 1.0, 1.0])
    return (
        SelectionEllipsoid(*abc),
        int(p.get("sample_cap", 500)),
        int(p.get("seed", 0)),
    )


def voxel_variance_tables(volume: Volume, sweep: Sweep) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-voxel subset size, intensity variance, and spherical variance,
    recomputed with the selection parameters recorded in the volume."""
    e, cap, seed = _selection_params(volume)
    arr = sweep.samples
    h = build_hash(arr.positions, max(e.a, e.b, e.c))
    lat = volume.lattice
    return active.voxel_stats(
        arr.intensities, arr.positions, arr.directions, arr.ray_ids,
        h.starts, h.order, h.qmin, h.qdims, h.cell_size,
        lat.origin, lat.spacing, np.asarray(lat.dims, dtype=np.int64),
        e.as_array(), cap, np.uint64(subsample_base_state(sweep.id, seed)),
    )


def representation_error(volume: Volume, sweep: Sweep, skip_missing: bool = True) -> ErrorReport:
    """Mean squared error between sample intensities and their reprojections.

    With skip_missing, samples without a usable model are excluded from the
    average (their count is still reported); otherwise they score against 0.
    """
    if volume.provenance.get("sweep_id", sweep.id) != sweep.id:
        warnings.warn(
            f"volume was reconstructed from sweep "
            f"{volume.provenance.get('sweep_id')!r}, evaluating against {sweep.id!r}"
        )
    arr = sweep.samples
    vals, missing = reproject_many(volume, arr.positions, arr.directions)
    sq = (arr.intensities - vals) ** 2
    sq[missing] = arr.intensities[missing] ** 2  # error vs background 0
    if skip_missing:
        errors = sq[~missing]
    else:
        errors = sq
    mse = float(errors.mean()) if errors.size else 0.0
    return ErrorReport(
        method=volume.provenance.get("method", volume.kind),
        params={k: v for k, v in volume.provenance.items() if k != "method"},
        skip_missing=skip_missing,
        squared_errors=errors,
        evaluated_count=int((~missing).sum()),
        missing_count=int(missing.sum()),
        total_count=int(missing.size),
        mse=mse,
    )


def binned_error(
    volume: Volume,
    sweep: Sweep,
    axis: str = "spherical_var",
    n_bins: int = 10,
    skip_missing: bool = True,
) -> ErrorReport:
    """Representation error grouped by the per-voxel variance of the voxel
    each sample lands in.

    ``intensity_var`` bins span the observed variance range; for
    ``spherical_var`` the range is fixed to [0, 2] so plots are comparable
    across sweeps.
    """
    if axis not in BIN_AXES:
        raise InvalidArgument(f"axis must be one of {BIN_AXES}, got {axis!r}")
    if n_bins < 2:
        raise InvalidArgument(f"n_bins must be >= 2, got {n_bins}")

    arr = sweep.samples
    vals, missing = reproject_many(volume, arr.positions, arr.directions)
    sq = (arr.intensities - vals) ** 2
    sq[missing] = arr.intensities[missing] ** 2
    counts, sigma_int, sigma_sph = voxel_variance_tables(volume, sweep)
    sigma = sigma_int if axis == "intensity_var" else sigma_sph

    # attribute each sample to its nearest voxel
    lat = volume.lattice
    idx = np.rint((arr.positions - lat.origin) / lat.spacing).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(lat.dims)[None, :]), axis=1)
    ny, nz = lat.dims[1], lat.dims[2]
    vi = np.where(inside, (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2], 0)
    sample_sigma = np.where(inside, sigma[vi], np.nan)

    use = ~np.isnan(sample_sigma)
    if skip_missing:
        use &= ~missing
    sq_u, sig_u = sq[use], sample_sigma[use]

    if axis == "spherical_var":
        lo, hi = SPHERICAL_VAR_RANGE
    else:
        lo = 0.0
        hi = float(sig_u.max()) if sig_u.size else 1.0
        if hi <= lo:
            hi = lo + 1.0
    width = (hi - lo) / n_bins
    which = np.clip(((sig_u - lo) / width).astype(np.int64), 0, n_bins - 1)

    bins = []
    for b in range(n_bins):
        in_bin = which == b
        n = int(in_bin.sum())
        bins.append(
            BinRow(
                bin_center=lo + (b + 0.5) * width,
                mse=float(sq_u[in_bin].mean()) if n else 0.0,
                count=n,
            )
        )

    mse = float(sq_u.mean()) if sq_u.size else 0.0
    return ErrorReport(
        method=volume.provenance.get("method", volume.kind),
        params={k: v for k, v in volume.provenance.items() if k != "method"},
        skip_missing=skip_missing,
        squared_errors=sq_u,
        evaluated_count=int(sq_u.size),
        missing_count=int(missing.sum()),
        total_count=int(missing.size),
        mse=mse,
        sigma_int=sigma_int,
        sigma_sph=sigma_sph,
        bins=bins,
    )
