"""Synthetic phantom scenes and tracked-sweep generation.

Scenes are collections of geometric primitives with direction-dependent
reflectance v = ambient + specular * |cos(gamma)|^exponent, gamma being the
angle between the beam and the surface normal at the closest surface point.
The |cos| makes the noiseless response point symmetric; optional half-space
occluders break that symmetry by zeroing measurements whose return path to
the probe crosses the occluded region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .core import Frame, Pose, Sweep
from .errors import InvalidArgument, InvalidTrajectory

PRIMITIVE_KINDS = ("plane", "sphere", "cylinder", "wire")
TRAJECTORY_KINDS = ("linear_sweep", "fan_tilt", "orbit")

_WIRE_RADIUS = 0.2  # mm; a wire is just a thin cylinder


def rotation_about(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    u = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(u)
    if n < 1e-12:
        raise InvalidArgument("rotation axis must be non-zero")
    u = u / n
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


@dataclass(frozen=True)
class Primitive:
    """One reflecting structure with a specular reflectance model."""

    kind: str
    point: np.ndarray  # plane point / sphere center / cylinder axis origin
    normal: np.ndarray | None = None  # plane only
    axis: np.ndarray | None = None  # cylinder / wire
    radius: float = 0.0
    ambient: float = 0.1
    specular: float = 0.8
    exponent: float = 2.0
    capture_mm: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise InvalidArgument(f"unknown primitive kind {self.kind!r}")
        if not (0 <= self.ambient <= 1 and 0 <= self.specular <= 1):
            raise InvalidArgument("ambient and specular must lie in [0, 1]")
        if self.ambient + self.specular > 1.0 + 1e-12:
            raise InvalidArgument("ambient + specular must not exceed 1")
        if self.exponent < 1:
            raise InvalidArgument("specular exponent must be >= 1")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64))
        if self.kind == "plane":
            n = np.asarray(self.normal, dtype=np.float64)
            object.__setattr__(self, "normal", n / np.linalg.norm(n))
        if self.kind in ("cylinder", "wire"):
            a = np.asarray(self.axis, dtype=np.float64)
            object.__setattr__(self, "axis", a / np.linalg.norm(a))
            if self.kind == "wire" and self.radius == 0.0:
                object.__setattr__(self, "radius", _WIRE_RADIUS)

    def surface_distance(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(distance to surface, surface normal at closest point) per point."""
        if self.kind == "plane":
            signed = (points - self.point) @ self.normal
            normals = np.broadcast_to(self.normal, points.shape)
            return np.abs(signed), normals
        if self.kind == "sphere":
            w = points - self.point
            r = np.linalg.norm(w, axis=1)
            safe = np.maximum(r, 1e-12)
            return np.abs(r - self.radius), w / safe[:, None]
        w = points - self.point
        w = w - (w @ self.axis)[:, None] * self.axis[None, :]
        r = np.linalg.norm(w, axis=1)
        normals = np.where(
            r[:, None] > 1e-12, w / np.maximum(r, 1e-12)[:, None], _perpendicular(self.axis)
        )
        return np.abs(r - self.radius), normals


def _perpendicular(u: np.ndarray) -> np.ndarray:
    pick = np.zeros(3)
    pick[int(np.argmin(np.abs(u)))] = 1.0
    v = np.cross(u, pick)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Occluder:
    """Half-space {x : normal . (x - point) >= 0} that absorbs the signal.

    A measurement (p, d) is occluded when p lies inside the half-space or
    when the return path from p back to the probe (upstream along -d) enters
    it, i.e. when normal . d < 0.
    """

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64))
        n = np.asarray(self.normal, dtype=np.float64)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    def blocks(self, points: np.ndarray, d: np.ndarray) -> np.ndarray:
        inside = (points - self.point) @ self.normal >= 0.0
        if float(self.normal @ d) < 0.0:
            return np.ones(points.shape[0], dtype=bool)
        return inside


@dataclass(frozen=True)
class Scene:
    primitives: tuple[Primitive, ...]
    occluders: tuple[Occluder, ...] = ()
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "occluders", tuple(self.occluders))
        if self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be >= 0")

    def intensities(self, points: np.ndarray, d) -> np.ndarray:
        """Noiseless direction-dependent intensity at each point for beam
        direction d."""
        d = np.asarray(d, dtype=np.float64)
        d = d / np.linalg.norm(d)
        out = np.zeros(points.shape[0])
        if self.primitives:
            dists = np.empty((len(self.primitives), points.shape[0]))
            normals = np.empty((len(self.primitives), points.shape[0], 3))
            for i, prim in enumerate(self.primitives):
                dists[i], normals[i] = prim.surface_distance(points)
            nearest = np.argmin(dists, axis=0)
            rng_rows = np.arange(points.shape[0])
            dist = dists[nearest, rng_rows]
            normal = normals[nearest, rng_rows]
            cos_g = np.abs(normal @ d)
            for i, prim in enumerate(self.primitives):
                sel = (nearest == i) & (dist <= prim.capture_mm)
                out[sel] = prim.ambient + prim.specular * cos_g[sel] ** prim.exponent
        for occ in self.occluders:
            out[occ.blocks(points, d)] = 0.0
        return out


def directional_intensity(scene: Scene, point, d) -> float:
    """Noiseless reflected intensity at a point for a beam direction."""
    return float(scene.intensities(np.asarray(point, dtype=np.float64)[None, :], d)[0])


@dataclass(frozen=True)
class FrameGeometry:
    width: int = 32
    height: int = 32
    pixel_spacing: tuple[float, float] = (1.0, 1.0)


@dataclass(frozen=True)
class TrajectorySpec:
    """Probe path: pure translation, a fan tilt about the probe face, or an
    orbit about a scene point."""

    kind: str
    frame_count: int
    angular_span_deg: float = 0.0
    start: Pose = field(default_factory=Pose.identity)
    step: tuple[float, float, float] = (0.0, 0.0, 0.0)  # linear_sweep, mm/frame
    pivot: tuple[float, float, float] | None = None  # orbit center
    axis: tuple[float, float, float] | None = None  # rotation axis; default lateral

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise InvalidArgument(f"unknown trajectory kind {self.kind!r}")
        if self.frame_count < 1:
            raise InvalidArgument("frame_count must be >= 1")
        if self.kind == "orbit":
            if self.frame_count > 1 and self.angular_span_deg == 0.0:
                raise InvalidTrajectory("orbit with more than one frame needs a non-zero span")
            if self.pivot is None:
                raise InvalidTrajectory("orbit needs a pivot point")


def _poses(traj: TrajectorySpec, geom: FrameGeometry) -> list[Pose]:
    r0, t0 = traj.start.rotation, traj.start.translation
    if traj.kind == "linear_sweep":
        step = np.asarray(traj.step, dtype=np.float64)
        return [Pose(r0, t0 + f * step) for f in range(traj.frame_count)]

    axis = (
        np.asarray(traj.axis, dtype=np.float64)
        if traj.axis is not None
        else r0 @ np.array([1.0, 0.0, 0.0])
    )
    if traj.kind == "fan_tilt":
        lat = geom.pixel_spacing[0]
        pivot = r0 @ np.array([(geom.width - 1) * lat / 2.0, 0.0, 0.0]) + t0
    else:
        pivot = np.asarray(traj.pivot, dtype=np.float64)

    span = math.radians(traj.angular_span_deg)
    poses = []
    for f in range(traj.frame_count):
        ang = 0.0 if traj.frame_count == 1 else -span / 2.0 + f * span / (traj.frame_count - 1)
        rot = rotation_about(axis, ang)
        poses.append(Pose(rot @ r0, pivot + rot @ (t0 - pivot)))
    return poses


def generate_sweep(
    scene: Scene,
    traj: TrajectorySpec,
    geom: FrameGeometry = FrameGeometry(),
    seed: int = 0,
    sweep_id: str | None = None,
) -> Sweep:
    """Simulate a tracked sweep; deterministic for a fixed seed.

    The noise stream is keyed per frame by (seed, frame index), so frames can
    be generated in any order or in parallel without changing the result.
    """
    w, h = geom.width, geom.height
    lat, ax = geom.pixel_spacing
    ix, iy = np.meshgrid(np.arange(w), np.arange(h))
    img = np.stack([ix.ravel() * lat, iy.ravel() * ax, np.zeros(w * h)], axis=1)

    frames = []
    for f, pose in enumerate(_poses(traj, geom)):
        points = img @ pose.rotation.T + pose.translation
        d = pose.rotation @ np.array([0.0, 1.0, 0.0])
        v = scene.intensities(points, d)
        if scene.noise_sigma > 0:
            rng = np.random.default_rng([seed, f])
            v = v + scene.noise_sigma * rng.standard_normal(v.shape)
        # quantize to f32 so in-memory sweeps match their on-disk round trip
        v = np.clip(v, 0.0, 1.0).astype(np.float32).astype(np.float64)
        frames.append(Frame(v.reshape(h, w), (lat, ax), pose, f))
    return Sweep(tuple(frames), id=sweep_id if sweep_id is not None else f"sim-{seed}")


def _pose_from_config(cfg: dict) -> Pose:
    t = np.asarray(cfg.get("translation", [0.0, 0.0, 0.0]), dtype=np.float64)
    r = np.eye(3)
    if "rotation_deg" in cfg:
        r = rotation_about(
            cfg.get("rotation_axis", [1.0, 0.0, 0.0]), math.radians(cfg["rotation_deg"])
        )
    return Pose(r, t)


def load_config(path) -> tuple[Scene, TrajectorySpec | None, FrameGeometry]:
    """Read a scene (and optional trajectory / frame geometry) from a TOML
    file; see docs/scene_config.md for the schema."""
    raw = tomllib.loads(Path(path).read_text())

    prims = []
    for p in raw.get("primitive", []):
        prims.append(
            Primitive(
                kind=p["kind"],
                point=p["point"],
                normal=p.get("normal"),
                axis=p.get("axis"),
                radius=p.get("radius", 0.0),
                ambient=p.get("ambient", 0.1),
                specular=p.get("specular", 0.8),
                exponent=p.get("exponent", 2.0),
                capture_mm=p.get("capture_mm", 1.0),
            )
        )
    occs = [Occluder(o["point"], o["normal"]) for o in raw.get("occluder", [])]
    scene = Scene(tuple(prims), tuple(occs), raw.get("noise_sigma", 0.0))

    traj = None
    if "trajectory" in raw:
        t = raw["trajectory"]
        traj = TrajectorySpec(
            kind=t["kind"],
            frame_count=t["frame_count"],
            angular_span_deg=t.get("angular_span_deg", 0.0),
            start=_pose_from_config(t.get("start", {})),
            step=tuple(t.get("step", (0.0, 0.0, 0.0))),
            pivot=tuple(t["pivot"]) if "pivot" in t else None,
            axis=tuple(t["axis"]) if "axis" in t else None,
        )

    g = raw.get("frame", {})
    geom = FrameGeometry(
        width=g.get("width", 32),
        height=g.get("height", 32),
        pixel_spacing=tuple(g.get("pixel_spacing", (1.0, 1.0))),
    )
    return scene, traj, geom
