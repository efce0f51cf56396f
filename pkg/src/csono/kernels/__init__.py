"""Kernel backend selection.

The hot voxel loops exist twice: numba-compiled (default) and pure numpy.
Set CSONO_NUMBA=0 to force the numpy fallback; it is also used automatically
when numba cannot be imported. ``benchmarks/benchmark_kernels.py`` compares
the two.
"""

from __future__ import annotations

import os

from ._common import (
    SpatialHash,
    TENSOR_COND_LIMIT,
    build_hash,
    design_rows,
    fnv1a64,
    mix64,
    subsample_base_state,
    subsample_py,
)
from . import _numpy as numpy_backend

_flag = os.environ.get("CSONO_NUMBA", "1").strip().lower()
numba_backend = None
if _flag not in ("0", "false", "no", "off"):
    # default to the OpenMP layer; the TBB probe warns on some hosts
    os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
    try:
        from . import _numba as numba_backend  # noqa: F401
    except ImportError:  # pragma: no cover - environment without numba
        numba_backend = None

active = numba_backend if numba_backend is not None else numpy_backend
BACKEND_NAME = active.NAME


def set_threads(n: int | None) -> int:
    """Bound the kernel worker count; returns the effective value.

    Only the numba backend is threaded; the numpy fallback ignores this.
    """
    if n is None or n < 1:
        n = os.cpu_count() or 1
    if active is numba_backend:
        import numba

        n = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
    return n


__all__ = [
    "SpatialHash",
    "TENSOR_COND_LIMIT",
    "BACKEND_NAME",
    "active",
    "build_hash",
    "design_rows",
    "fnv1a64",
    "mix64",
    "numba_backend",
    "numpy_backend",
    "set_threads",
    "subsample_base_state",
    "subsample_py",
]
