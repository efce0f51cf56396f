import numpy as np
import pytest

from csono.core import Frame, Pose, Sweep
from csono.simulate import (
    FrameGeometry,
    Occluder,
    Primitive,
    Scene,
    TrajectorySpec,
    generate_sweep,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def specular_plane_scene():
    """A strongly direction-dependent reflector below the probe."""
    return Scene(
        primitives=(
            Primitive(
                kind="plane", point=[8.0, 14.0, 8.0], normal=[0.0, -1.0, 0.0],
                ambient=0.1, specular=0.8, exponent=8.0, capture_mm=1.5,
            ),
        ),
        noise_sigma=0.02,
    )


@pytest.fixture(scope="session")
def fan_sweep(specular_plane_scene):
    """Small fan over the specular plane; the workhorse fixture."""
    traj = TrajectorySpec(
        kind="fan_tilt", frame_count=20, angular_span_deg=60,
        start=Pose(np.eye(3), np.array([0.0, 0.0, 8.0])),
    )
    geom = FrameGeometry(width=16, height=16, pixel_spacing=(1.0, 1.0))
    return generate_sweep(specular_plane_scene, traj, geom, seed=3, sweep_id="fan-fixture")


def multi_orbit_sweep(scene, sweep_id, frame_count=10, span=160.0, seed=11, width=12):
    """Orbit segments about three axes concatenated into one sweep, giving
    per-voxel direction sets of full quadratic rank (single-axis orbits keep
    all beams coplanar, which leaves the tensor system singular)."""
    geom = FrameGeometry(width=width, height=width, pixel_spacing=(1.0, 1.0))
    frames = []
    for axis in ((1, 0, 0), (0, 0, 1), (1, 0, 1)):
        traj = TrajectorySpec(
            kind="orbit", frame_count=frame_count, angular_span_deg=span,
            start=Pose(np.eye(3), np.array([-(width - 1) / 2.0, -12.0, -(width - 1) / 2.0])),
            pivot=(0.0, 0.0, 0.0), axis=axis,
        )
        frames.extend(generate_sweep(scene, traj, geom, seed=seed).frames)
    frames = [Frame(f.pixels, f.pixel_spacing, f.pose) for f in frames]
    return Sweep(tuple(frames), id=sweep_id)


@pytest.fixture(scope="session")
def orbit_sphere_scene():
    return Scene(
        primitives=(
            Primitive(
                kind="sphere", point=[0.0, 0.0, 0.0], radius=5.0,
                ambient=0.1, specular=0.7, exponent=4.0, capture_mm=1.5,
            ),
        ),
        noise_sigma=0.01,
    )


@pytest.fixture(scope="session")
def shadowed_orbit_scene():
    return Scene(
        primitives=(
            Primitive(
                kind="sphere", point=[0.0, 0.0, 0.0], radius=5.0,
                ambient=0.1, specular=0.7, exponent=4.0, capture_mm=1.5,
            ),
        ),
        occluders=(Occluder(point=[20.0, 0.0, 0.0], normal=[1.0, 0.0, 0.0]),),
        noise_sigma=0.01,
    )


@pytest.fixture(scope="session")
def orbit_sweep(orbit_sphere_scene):
    return multi_orbit_sweep(orbit_sphere_scene, "orbit-fixture")


@pytest.fixture(scope="session")
def shadowed_orbit_sweep(shadowed_orbit_scene):
    return multi_orbit_sweep(shadowed_orbit_scene, "orbit-shadowed-fixture")
