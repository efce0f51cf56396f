"""Per-voxel model fitting and the volume-level orchestrator.

Four reconstructions are available: scalar mean, scalar median, a symmetric
3x3 tensor whose quadratic form approximates the direction-dependent
intensity, and a discretized spherical function with one intensity per
directional cell.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import (
    KIND_SCALAR_MEAN,
    KIND_SCALAR_MEDIAN,
    KIND_SPHERICAL,
    KIND_TENSOR,
    SphericalModel,
    Sweep,
    SymmetricTensor,
    Volume,
    VoxelLattice,
)
from .errors import ConfigMismatch, EmptySubset, InvalidArgument
from .grids import SphericalGrid, cell_of_many
from .kernels import (
    TENSOR_COND_LIMIT,
    active,
    build_hash,
    design_rows,
    subsample_base_state,
)
from .kernels._common import solve_tensor
from .selection import SampleSubset, SelectionEllipsoid

METHODS = ("mean", "median", "tensor", "spherical")

_METHOD_KIND = {
    "mean": KIND_SCALAR_MEAN,
    "median": KIND_SCALAR_MEDIAN,
    "tensor": KIND_TENSOR,
    "spherical": KIND_SPHERICAL,
}


@dataclass
class ReconstructionConfig:
    method: str = "mean"
    grid: SphericalGrid | None = None  # spherical only
    cell_reducer: str = "mean"  # spherical only: mean | median
    min_tensor_samples: int = 6
    sample_cap: int = 500
    spd_clamp: bool = False
    ellipsoid: SelectionEllipsoid = field(default_factory=SelectionEllipsoid)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r}")
        if self.cell_reducer not in ("mean", "median"):
            raise InvalidArgument(f"unknown cell reducer {self.cell_reducer!r}")
        if self.min_tensor_samples < 6:
            raise InvalidArgument("min_tensor_samples must be >= 6")
        if self.sample_cap < 1:
            raise InvalidArgument("sample_cap must be >= 1")


def compound_mean(subset: SampleSubset) -> float:
    if subset.count == 0:
        raise EmptySubset("cannot average an empty subset")
    return float(np.mean(subset.intensities))


def compound_median(subset: SampleSubset) -> float:
    if subset.count == 0:
        raise EmptySubset("cannot take the median of an empty subset")
    return float(np.median(subset.intensities))


def fit_tensor(subset: SampleSubset, cfg: ReconstructionConfig | None = None) -> SymmetricTensor:
    """Least-squares symmetric tensor through the subset's quadratic forms.

    Never raises: an underdetermined or numerically singular system yields a
    tensor with valid=False.
    """
    cfg = cfg or ReconstructionConfig(method="tensor")
    if subset.count < cfg.min_tensor_samples:
        return SymmetricTensor.invalid()
    rows = design_rows(subset.directions)
    x, ok = solve_tensor(rows, subset.intensities, cfg.spd_clamp, TENSOR_COND_LIMIT)
    if not ok:
        return SymmetricTensor.invalid()
    return SymmetricTensor(x)


def fit_spherical(
    subset: SampleSubset, grid: SphericalGrid, reducer: str = "mean"
) -> SphericalModel:
    """Reduce sample intensities per directional cell; untouched cells stay
    empty (NaN)."""
    if reducer not in ("mean", "median"):
        raise InvalidArgument(f"unknown cell reducer {reducer!r}")
    cells = np.full(grid.n_cells, np.nan)
    if subset.count:
        cids = cell_of_many(grid, subset.directions)
        for k in np.unique(cids):
            vals = subset.intensities[cids == k]
            cells[k] = np.median(vals) if reducer == "median" else np.mean(vals)
    return SphericalModel(cells, grid)


def lattice_for_sweep(sweep: Sweep, spacing: float = 0.5, margin: float = 1.0) -> VoxelLattice:
    """Smallest lattice covering the sweep's sample positions plus a margin."""
    pos = sweep.samples.positions
    lo = pos.min(axis=0) - margin
    hi = pos.max(axis=0) + margin
    dims = np.maximum(1, np.ceil((hi - lo) / spacing).astype(np.int64) + 1)
    return VoxelLattice(dims=tuple(int(d) for d in dims), origin=lo, spacing=spacing)


def _provenance(sweep: Sweep, cfg: ReconstructionConfig) -> dict:
    p = {
        "sweep_id": sweep.id,
        "method": cfg.method,
        "ellipsoid": [cfg.ellipsoid.a, cfg.ellipsoid.b, cfg.ellipsoid.c],
        "sample_cap": cfg.sample_cap,
        "seed": cfg.seed,
        "software": f"csono {__version__}",
    }
    if cfg.method == "tensor":
        p["min_tensor_samples"] = cfg.min_tensor_samples
        p["spd_clamp"] = cfg.spd_clamp
    if cfg.method == "spherical":
        p["grid"] = {"scheme": cfg.grid.scheme, "param": cfg.grid.param}
        p["cell_reducer"] = cfg.cell_reducer
    return p


def reconstruct_volume(sweep: Sweep, lattice: VoxelLattice, cfg: ReconstructionConfig) -> Volume:
    """Select and fit every voxel of the lattice.

    Deterministic for fixed (sweep, lattice, config) regardless of the kernel
    thread count: voxels are independent and all per-voxel reductions run in
    sorted sample order.
    """
    if cfg.method == "spherical" and cfg.grid is None:
        raise ConfigMismatch("spherical reconstruction needs a grid")

    arr = sweep.samples
    lo = lattice.origin
    hi = lattice.origin + lattice.spacing * (np.array(lattice.dims) - 1)
    covered = np.any(
        np.all((arr.positions >= lo - 1e-9) & (arr.positions <= hi + 1e-9), axis=1)
    )
    if not covered:
        warnings.warn("lattice does not cover any sample; volume will be empty")

    e = cfg.ellipsoid
    h = build_hash(arr.positions, max(e.a, e.b, e.c))
    base_state = np.uint64(subsample_base_state(sweep.id, cfg.seed))
    common = (
        h.starts, h.order, h.qmin, h.qdims, h.cell_size,
        lattice.origin, lattice.spacing, np.asarray(lattice.dims, dtype=np.int64),
        e.as_array(), cfg.sample_cap, base_state,
    )
    prov = _provenance(sweep, cfg)

    if cfg.method in ("mean", "median"):
        values, empty = active.reconstruct_scalar(
            arr.intensities, arr.positions, arr.ray_ids, *common,
            cfg.method == "median",
        )
        return Volume(
            lattice=lattice, kind=_METHOD_KIND[cfg.method],
            values=values, empty=empty, provenance=prov,
        )
    if cfg.method == "tensor":
        rows = design_rows(arr.directions)
        coeffs, valid = active.reconstruct_tensor(
            rows, arr.intensities, arr.positions, arr.ray_ids, *common,
            cfg.min_tensor_samples, cfg.spd_clamp, TENSOR_COND_LIMIT,
        )
        return Volume(
            lattice=lattice, kind=KIND_TENSOR,
            coeffs=coeffs, valid=valid, provenance=prov,
        )
    cell_ids = cell_of_many(cfg.grid, arr.directions)
    cells = active.reconstruct_spherical(
        cell_ids, arr.intensities, arr.positions, arr.ray_ids, *common,
        cfg.grid.n_cells, cfg.cell_reducer == "median",
    )
    return Volume(
        lattice=lattice, kind=KIND_SPHERICAL,
        cells=cells, grid=cfg.grid, provenance=prov,
    )
