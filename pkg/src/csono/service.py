"""HTTP service exposing loaded volumes for interactive free-view exploration.

All endpoints are read-only over immutable volumes, so identical requests
yield identical bytes; responses carry a strong content-hash ETag. Image
responses are PNG; the validity mask rides along in the X-CS-Mask header as
``<width>x<height>;zlib+base64`` of a row-major byte mask (1 = valid pixel).
"""

from __future__ import annotations

import base64
import hashlib
import zlib

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware

from .core import KIND_TENSOR, SCALAR_KINDS, Volume
from .errors import CsonoError, ModeMismatch, UnsupportedVolumeKind
from .render import (
    axis_slice_plane,
    extract_slice,
    free_view_image,
    normalize_minmax,
    to_png_bytes,
)

API_PREFIX = "/api"


def _mask_header(mask: np.ndarray) -> str:
    h, w = mask.shape
    packed = zlib.compress(mask.astype(np.uint8).tobytes(), level=9)
    return f"{w}x{h};" + base64.b64encode(packed).decode("ascii")


def _png_response(img01: np.ndarray, mask: np.ndarray) -> Response:
    body = to_png_bytes(img01)
    return Response(
        content=body,
        media_type="image/png",
        headers={
            "ETag": '"' + hashlib.sha256(body).hexdigest() + '"',
            "X-CS-Mask": _mask_header(mask),
        },
    )


def _volume_info(vid: str, volume: Volume) -> dict:
    grid = None
    if volume.grid is not None:
        grid = {
            "scheme": volume.grid.scheme,
            "param": volume.grid.param,
            "n_cells": volume.grid.n_cells,
        }
    return {
        "id": vid,
        "kind": volume.kind,
        "dims": list(volume.lattice.dims),
        "spacing": volume.lattice.spacing,
        "grid": grid,
    }


def create_app(volumes: dict[str, Volume], static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="csono free-view service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"], allow_headers=["*"]
    )

    def get_volume(vid: str) -> Volume:
        if vid not in volumes:
            raise HTTPException(status_code=404, detail=f"unknown volume {vid!r}")
        return volumes[vid]

    def get_plane(volume: Volume, plane: str, index: int):
        try:
            return axis_slice_plane(volume.lattice, plane, index)
        except CsonoError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get(API_PREFIX + "/volumes")
    def list_volumes():
        return [_volume_info(vid, v) for vid, v in sorted(volumes.items())]

    @app.get(API_PREFIX + "/volumes/{vid}/slice")
    def slice_endpoint(
        vid: str,
        plane: str = Query("axial"),
        index: int = Query(0),
        mode: str = Query(...),
    ):
        volume = get_volume(vid)
        sp = get_plane(volume, plane, index)
        try:
            img, mask = extract_slice(volume, sp, mode)
        except ModeMismatch as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if mode in ("trace", "dominant"):
            img = normalize_minmax(img, mask)
        return _png_response(img, mask)

    @app.get(API_PREFIX + "/volumes/{vid}/freeview")
    def freeview_endpoint(
        vid: str,
        dx: float = Query(...),
        dy: float = Query(...),
        dz: float = Query(...),
        plane: str = Query("axial"),
        index: int = Query(0),
    ):
        volume = get_volume(vid)
        d = np.array([dx, dy, dz])
        if np.linalg.norm(d) < 1e-6:
            raise HTTPException(status_code=400, detail="direction must be non-zero")
        sp = get_plane(volume, plane, index)
        try:
            img, mask = free_view_image(volume, sp, d / np.linalg.norm(d))
        except UnsupportedVolumeKind as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _png_response(img, mask)

    @app.get(API_PREFIX + "/volumes/{vid}/voxel")
    def voxel_endpoint(vid: str, x: int = Query(...), y: int = Query(...), z: int = Query(...)):
        volume = get_volume(vid)
        nx, ny, nz = volume.lattice.dims
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise HTTPException(status_code=400, detail="voxel index outside the lattice")
        i = volume.lattice.flat_index(x, y, z)
        if volume.kind in SCALAR_KINDS:
            return {
                "kind": volume.kind,
                "value": float(volume.values[i]),
                "empty": bool(volume.empty[i]),
            }
        if volume.kind == KIND_TENSOR:
            return {
                "kind": volume.kind,
                "coeffs": [float(c) for c in volume.coeffs[i]],
                "valid": bool(volume.valid[i]),
            }
        row = volume.cells[i]
        filled = ~np.isnan(row)
        return {
            "kind": volume.kind,
            "cells": [
                {
                    "k": int(k),
                    "direction": [float(c) for c in volume.grid.points[k]],
                    "value": float(row[k]),
                }
                for k in np.nonzero(filled)[0]
            ],
        }

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="viewer")
    return app
