import numpy as np
import pytest

from csono.core import Frame, Pose, Sweep, Volume, VoxelLattice
from csono.errors import EmptySubset, InvalidArgument
from csono.evaluate import (
    binned_error,
    intensity_variance,
    representation_error,
    reproject,
    reproject_many,
)
from csono.grids import build_fibonacci, cell_of
from csono.reconstruct import ReconstructionConfig, lattice_for_sweep, reconstruct_volume
from csono.selection import SampleSubset
from csono.simulate import FrameGeometry, Primitive, Scene, TrajectorySpec, generate_sweep

from .oracles import quadratic_form_values, uniform_sphere


def _tensor_volume(coeff_rows, valid, dims=(1, 1, 1)):
    lat = VoxelLattice(dims, np.zeros(3), 1.0)
    return Volume(
        lattice=lat, kind="tensor",
        coeffs=np.asarray(coeff_rows, np.float32).reshape(lat.n_voxels, 6),
        valid=np.asarray(valid, bool).reshape(lat.n_voxels),
    )


class TestReproject:
    def test_isotropic_tensor(self, rng):
        c = 0.37
        vol = _tensor_volume([[c, c, c, 0, 0, 0]], [True])
        for d in uniform_sphere(rng, 16):
            s_val = reproject_many(vol, np.zeros((1, 3)), d[None, :])
            assert s_val[0][0] == pytest.approx(c, abs=1e-7)

    def test_invalid_tensor_missing(self):
        vol = _tensor_volume([[0.5, 0.5, 0.5, 0, 0, 0]], [False])
        vals, miss = reproject_many(vol, np.zeros((1, 3)), np.array([[0, 0, 1.0]]))
        assert miss[0]

    def test_outside_lattice_missing(self):
        vol = _tensor_volume([[0.5, 0.5, 0.5, 0, 0, 0]], [True])
        vals, miss = reproject_many(vol, np.array([[9.0, 0, 0]]), np.array([[0, 0, 1.0]]))
        assert miss[0]

    def test_spherical_cell_routing(self):
        g = build_fibonacci(42)
        cells = np.full((1, 42), np.nan, np.float32)
        k1 = cell_of(g, [0, 0, 1.0])
        k2 = cell_of(g, [0, 0, -1.0])
        cells[0, k1] = 0.2
        cells[0, k2] = 0.8
        lat = VoxelLattice((1, 1, 1), np.zeros(3), 1.0)
        vol = Volume(lattice=lat, kind="spherical", cells=cells, grid=g)
        vals, miss = reproject_many(vol, np.zeros((2, 3)), np.array([[0, 0, 1.0], [0, 0, -1.0]]))
        assert not miss.any()
        np.testing.assert_allclose(vals, [0.2, 0.8], atol=1e-7)

    def test_spherical_empty_cell_falls_back_to_mean(self):
        g = build_fibonacci(42)
        cells = np.full((1, 42), np.nan, np.float32)
        cells[0, 0] = 0.2
        cells[0, 1] = 0.6
        lat = VoxelLattice((1, 1, 1), np.zeros(3), 1.0)
        vol = Volume(lattice=lat, kind="spherical", cells=cells, grid=g)
        d = -g.points[0]  # lands in some far cell that is empty
        vals, miss = reproject_many(vol, np.zeros((1, 3)), d[None, :])
        assert not miss[0]
        assert vals[0] == pytest.approx(0.4, abs=1e-7)

    def test_scalar_trilinear_interpolates(self):
        lat = VoxelLattice((2, 1, 1), np.zeros(3), 1.0)
        vol = Volume(
            lattice=lat, kind="scalar_mean",
            values=np.array([0.2, 0.8], np.float32), empty=np.zeros(2, bool),
        )
        vals, miss = reproject_many(vol, np.array([[0.25, 0, 0]]), np.array([[0, 1.0, 0]]))
        assert vals[0] == pytest.approx(0.2 * 0.75 + 0.8 * 0.25, abs=1e-6)

    def test_scalar_empty_excluded_and_renormalized(self):
        lat = VoxelLattice((2, 1, 1), np.zeros(3), 1.0)
        vol = Volume(
            lattice=lat, kind="scalar_mean",
            values=np.array([0.2, 0.8], np.float32), empty=np.array([False, True]),
        )
        vals, miss = reproject_many(vol, np.array([[0.25, 0, 0]]), np.array([[0, 1.0, 0]]))
        assert not miss[0]
        assert vals[0] == pytest.approx(0.2, abs=1e-6)

    def test_scalar_all_empty_missing(self):
        lat = VoxelLattice((1, 1, 1), np.zeros(3), 1.0)
        vol = Volume(
            lattice=lat, kind="scalar_mean",
            values=np.zeros(1, np.float32), empty=np.ones(1, bool),
        )
        assert reproject(vol, _sample_at([0, 0, 0])) is None


def _sample_at(pos):
    from csono.core import Sample

    return Sample(0.5, np.asarray(pos, float), np.array([0, 1.0, 0]), 0, 0)


class TestIntensityVariance:
    def test_constant(self):
        sub = SampleSubset.from_arrays(np.full(5, 0.3), uniform_sphere(np.random.default_rng(0), 5))
        assert intensity_variance(sub) == 0.0

    def test_zero_one(self):
        sub = SampleSubset.from_arrays(np.array([0.0, 1.0]), uniform_sphere(np.random.default_rng(0), 2))
        assert intensity_variance(sub) == pytest.approx(0.25)

    def test_three_values(self):
        sub = SampleSubset.from_arrays(
            np.array([0.2, 0.4, 0.6]), uniform_sphere(np.random.default_rng(0), 3)
        )
        assert intensity_variance(sub) == pytest.approx(0.08 / 3, abs=1e-12)

    def test_empty(self):
        sub = SampleSubset.from_arrays(np.empty(0), np.empty((0, 3)))
        with pytest.raises(EmptySubset):
            intensity_variance(sub)


def _constant_linear_sweep():
    scene = Scene(
        primitives=(
            Primitive(
                kind="plane", point=[0, 0, 0], normal=[0, -1.0, 0],
                ambient=0.4, specular=0.0, exponent=1.0, capture_mm=1e9,
            ),
        ),
        noise_sigma=0.0,
    )
    traj = TrajectorySpec(kind="linear_sweep", frame_count=8, step=(0, 0, 1.0))
    return generate_sweep(scene, traj, FrameGeometry(8, 8, (1.0, 1.0)), seed=0, sweep_id="const")


class TestRepresentationError:
    def test_constant_sweep_mean_exact(self):
        sweep = _constant_linear_sweep()
        lattice = lattice_for_sweep(sweep, spacing=1.0)
        vol = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="mean"))
        rep = representation_error(vol, sweep)
        assert rep.mse < 1e-6
        assert rep.evaluated_count == sweep.sample_count

    def test_quadratic_form_scene_tensor_exact(self):
        """Intensities generated exactly as the quadratic form of one tensor;
        the tensor model class then represents the sweep almost exactly."""
        from csono.simulate import rotation_about

        base = np.array([[0.5, 0.05, 0.0], [0.05, 0.3, 0.02], [0.0, 0.02, 0.4]])
        frames = []
        idx = 0
        for axis in ((1, 0, 0), (0, 0, 1), (1, 0, 1)):
            for f in range(8):
                ang = -0.9 + f * 1.8 / 7
                rot = rotation_about(axis, ang)
                pose = Pose(rot, rot @ np.array([-4.5, -11.0, -4.5]))
                d = pose.rotation @ np.array([0.0, 1.0, 0.0])
                v = quadratic_form_values(base, np.tile(d, (100, 1)))
                frames.append(Frame(np.clip(v, 0, 1).reshape(10, 10), (1.0, 1.0), pose, idx))
                idx += 1
        sweep = Sweep(tuple(frames), id="quadratic")
        lattice = lattice_for_sweep(sweep, spacing=1.0)
        vol = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="tensor"))
        assert vol.valid.sum() > 0
        rep = representation_error(vol, sweep, skip_missing=True)
        assert rep.evaluated_count > 0
        assert rep.mse < 1e-4

    def test_skip_missing_counts(self, fan_sweep):
        lattice = lattice_for_sweep(fan_sweep, spacing=1.0)
        vol = reconstruct_volume(fan_sweep, lattice, ReconstructionConfig(method="tensor"))
        with_skip = representation_error(vol, fan_sweep, skip_missing=True)
        without = representation_error(vol, fan_sweep, skip_missing=False)
        assert with_skip.evaluated_count <= without.total_count
        assert with_skip.total_count == without.total_count == fan_sweep.sample_count
        assert with_skip.evaluated_count + with_skip.missing_count == with_skip.total_count

    def test_mismatched_sweep_warns(self, fan_sweep):
        lattice = lattice_for_sweep(fan_sweep, spacing=1.0)
        vol = reconstruct_volume(fan_sweep, lattice, ReconstructionConfig(method="mean"))
        other = Sweep(fan_sweep.frames, id="other-sweep")
        with pytest.warns(UserWarning, match="reconstructed from sweep"):
            representation_error(vol, other)

    def test_mse_nonnegative_and_zero_iff_exact(self):
        sweep = _constant_linear_sweep()
        lattice = lattice_for_sweep(sweep, spacing=1.0)
        vol = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="median"))
        rep = representation_error(vol, sweep)
        assert rep.mse >= 0.0


class TestBinnedError:
    def test_single_direction_all_first_bin(self):
        sweep = _constant_linear_sweep()
        lattice = lattice_for_sweep(sweep, spacing=1.0)
        vol = reconstruct_volume(sweep, lattice, ReconstructionConfig(method="mean"))
        rep = binned_error(vol, sweep, axis="spherical_var", n_bins=5)
        assert rep.bins[0].count == rep.evaluated_count
        assert all(b.count == 0 for b in rep.bins[1:])

    def test_global_mse_is_weighted_bin_mean(self, orbit_sweep):
        lattice = lattice_for_sweep(orbit_sweep, spacing=1.0)
        vol = reconstruct_volume(orbit_sweep, lattice, ReconstructionConfig(method="mean"))
        rep = binned_error(vol, orbit_sweep, axis="spherical_var", n_bins=8)
        weighted = sum(b.mse * b.count for b in rep.bins)
        total = sum(b.count for b in rep.bins)
        assert total == rep.evaluated_count
        assert weighted / total == pytest.approx(rep.mse, abs=1e-12)

    def test_two_cluster_counts_exact(self):
        """Hand-built fixture: two co-located frames whose pixels agree on the
        left half (variance 0) and differ on the right (variance 0.04), so the
        two-bin histogram must split the samples exactly down the middle."""
        w = h = 6
        pix_a = np.full((h, w), 0.4)
        pix_b = np.full((h, w), 0.4)
        pix_a[:, w // 2:] = 0.2
        pix_b[:, w // 2:] = 0.6
        frames = (
            Frame(pix_a, (1.0, 1.0), Pose.identity()),
            Frame(pix_b, (1.0, 1.0), Pose.identity()),
        )
        sweep = Sweep(frames, id="two-cluster")
        lattice = lattice_for_sweep(sweep, spacing=1.0, margin=0.0)
        cfg = ReconstructionConfig(method="mean")
        # a small ellipsoid keeps each voxel on its own pixel column
        from csono.selection import SelectionEllipsoid

        cfg.ellipsoid = SelectionEllipsoid(0.4, 0.4, 0.4)
        vol = reconstruct_volume(sweep, lattice, cfg)
        rep = binned_error(vol, sweep, axis="intensity_var", n_bins=2)
        assert rep.bins[0].count == w * h  # the constant half: 2 frames x 18 px
        assert rep.bins[1].count == w * h
        assert rep.bins[0].mse == pytest.approx(0.0, abs=1e-12)
        assert rep.bins[1].mse == pytest.approx(0.04, abs=1e-9)  # (0.2 or 0.6) vs mean 0.4

    def test_axis_validated(self, fan_sweep):
        lattice = lattice_for_sweep(fan_sweep, spacing=1.0)
        vol = reconstruct_volume(fan_sweep, lattice, ReconstructionConfig(method="mean"))
        with pytest.raises(InvalidArgument):
            binned_error(vol, fan_sweep, axis="direction", n_bins=4)
        with pytest.raises(InvalidArgument):
            binned_error(vol, fan_sweep, axis="spherical_var", n_bins=1)

    def test_csv_json_export(self, tmp_path, fan_sweep):
        lattice = lattice_for_sweep(fan_sweep, spacing=1.0)
        vol = reconstruct_volume(fan_sweep, lattice, ReconstructionConfig(method="mean"))
        rep = binned_error(vol, fan_sweep, axis="spherical_var", n_bins=4)
        csv_path = tmp_path / "bins.csv"
        json_path = tmp_path / "summary.json"
        rep.write_csv(csv_path)
        rep.write_json(json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "bin_center,mse,count"
        assert len(lines) == 5
        import json

        summary = json.loads(json_path.read_text())
        assert {"mse", "evaluated_count", "missing_count", "total_count", "method"} <= set(summary)
