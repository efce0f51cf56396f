"""Per-voxel sample selection.

A sample contributes to a voxel when the voxel center falls inside the
ellipsoidal region of influence around the sample position. Samples are then
grouped per scan line and only the nearest sample of each ray is kept; if the
result still exceeds the cap it is subsampled uniformly with a deterministic
stream keyed by (sweep id, voxel index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Sample, Sweep
from .errors import InvalidArgument
from .kernels import build_hash, numpy_backend, subsample_base_state


@dataclass(frozen=True)
class SelectionEllipsoid:
    """Axis-aligned region of influence; a, b, c are the semi-axes in mm."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise InvalidArgument(f"semi-axes must be positive, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=np.float64)


def ellipsoid_contains(center, p, e: SelectionEllipsoid) -> bool:
    """True iff the voxel center lies in the sample's region of influence
    (boundary inclusive)."""
    rel = (np.asarray(center, dtype=np.float64) - np.asarray(p, dtype=np.float64)) / e.as_array()
    return bool(rel @ rel <= 1.0)


@dataclass(frozen=True)
class SampleSubset:
    """Samples contributing to one voxel, at most one per ray, in ascending
    sample-index order."""

    voxel_index: int
    indices: np.ndarray  # global sample indices into the sweep arrays
    intensities: np.ndarray
    positions: np.ndarray
    directions: np.ndarray
    ray_ids: np.ndarray
    frame_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.frame_ids is None:
            object.__setattr__(self, "frame_ids", np.zeros(self.count, dtype=np.int64))
        if np.unique(self.ray_ids).size != self.ray_ids.size:
            raise InvalidArgument("subset holds more than one sample of a ray")

    @property
    def count(self) -> int:
        return int(self.indices.size)

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(
                intensity=float(self.intensities[t]),
                position=self.positions[t],
                direction=self.directions[t],
                ray_id=int(self.ray_ids[t]),
                frame_id=int(self.frame_ids[t]),
            )
            for t in range(self.count)
        ]

    @classmethod
    def from_arrays(
        cls, intensities, directions, positions=None, ray_ids=None, voxel_index=0
    ) -> "SampleSubset":
        """Synthetic subset for direct fitting, bypassing selection."""
        v = np.asarray(intensities, dtype=np.float64)
        d = np.asarray(directions, dtype=np.float64)
        n = v.shape[0]
        if positions is None:
            positions = np.zeros((n, 3))
        if ray_ids is None:
            ray_ids = np.arange(n, dtype=np.int64)
        return cls(
            voxel_index=voxel_index,
            indices=np.arange(n, dtype=np.int64),
            intensities=v,
            positions=np.asarray(positions, dtype=np.float64),
            directions=d,
            ray_ids=np.asarray(ray_ids, dtype=np.int64),
            frame_ids=np.zeros(n, dtype=np.int64),
        )


def select_samples(
    voxel_center,
    sweep: Sweep,
    e: SelectionEllipsoid,
    cap: int = 500,
    voxel_index: int = 0,
    seed: int = 0,
) -> SampleSubset:
    """Contributing subset for one voxel center.

    ``voxel_index`` and ``seed`` key the deterministic cap subsampling; pass
    the voxel's linear lattice index to reproduce what the volume
    reconstruction selects.
    """
    if cap < 1:
        raise InvalidArgument(f"cap must be >= 1, got {cap}")
    arr = sweep.samples
    h = build_hash(arr.positions, max(e.a, e.b, e.c))
    base = subsample_base_state(sweep.id, seed)
    idx = numpy_backend._select_voxel(
        np.asarray(voxel_center, dtype=np.float64),
        arr.positions,
        arr.ray_ids,
        h.starts,
        h.order,
        h.qmin,
        h.qdims,
        h.cell_size,
        e.as_array(),
        cap,
        numpy_backend._voxel_state(base, voxel_index),
    )
    return SampleSubset(
        voxel_index=voxel_index,
        indices=idx,
        intensities=arr.intensities[idx],
        positions=arr.positions[idx],
        directions=arr.directions[idx],
        ray_ids=arr.ray_ids[idx],
        frame_ids=arr.frame_ids[idx],
    )
