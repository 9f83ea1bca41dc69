import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canopy_light.cloud import (
    BRANCH,
    FOLIAGE,
    EmptyCloudError,
    EmptyGridError,
    LabeledCloud,
    assign_coefficients,
    load_cloud,
    offset,
    rotate_about_trunk,
    rotation_to_zenith,
    save_cloud,
    voxelize,
)
from canopy_light.weather import direction_from_angles


def random_cloud(seed, n=200, branch_share=0.2):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-1, 1, (n, 3)) + [0, 0, 2]
    labels = np.where(rng.random(n) < branch_share, BRANCH, FOLIAGE)
    return LabeledCloud(xyz, labels, 0.0)


unit_up = st.tuples(st.floats(0, 359.99), st.floats(5, 90)).map(
    lambda ae: direction_from_angles(np.array([ae[0]]), np.array([ae[1]]))[0]
)


class TestIO:
    def test_round_trip_bit_exact(self, tmp_path):
        cloud = random_cloud(0)
        save_cloud(cloud, tmp_path / "c.csv")
        back = load_cloud(tmp_path / "c.csv")
        np.testing.assert_array_equal(back.xyz, cloud.xyz)
        np.testing.assert_array_equal(back.labels, cloud.labels)
        assert back.ground_z == cloud.ground_z

    def test_npz_round_trip(self, tmp_path):
        cloud = random_cloud(1)
        save_cloud(cloud, tmp_path / "c.npz")
        back = load_cloud(tmp_path / "c.npz")
        np.testing.assert_array_equal(back.xyz, cloud.xyz)
        np.testing.assert_array_equal(back.labels, cloud.labels)

    def test_single_point(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("x,y,z,label\n1.5,2.5,3.5,foliage\n")
        cloud = load_cloud(path)
        assert len(cloud) == 1 and cloud.labels[0] == FOLIAGE

    def test_unknown_label_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z,label\n0,0,0,branch\n0,0,1,leaf\n")
        with pytest.raises(ValueError, match=r"bad\.csv:3: unknown label 'leaf'"):
            load_cloud(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z,label\n0,0,zz,branch\n")
        with pytest.raises(ValueError, match=":2:"):
            load_cloud(path)

    def test_empty_file_keeps_ground(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# ground_z=-0.25\nx,y,z,label\n")
        with pytest.raises(EmptyCloudError) as info:
            load_cloud(path)
        assert info.value.ground_z == -0.25

    def test_energy_column_ignored_on_load(self, tmp_path):
        cloud = random_cloud(2, n=10)
        save_cloud(cloud, tmp_path / "e.csv", energy=np.arange(10.0))
        np.testing.assert_array_equal(load_cloud(tmp_path / "e.csv").xyz, cloud.xyz)

    def test_default_ground_is_low_percentile(self):
        xyz = np.column_stack([np.zeros(101), np.zeros(101), np.arange(101.0)])
        assert LabeledCloud(xyz, np.ones(101)).ground_z == pytest.approx(1.0)


class TestCoefficients:
    def test_foliage_and_branch(self):
        cloud = LabeledCloud([[0, 0, 0], [0, 0, 1]], [FOLIAGE, BRANCH])
        c = assign_coefficients(cloud, 0.8)
        assert c.alpha[0] == pytest.approx(0.2) and c.beta[0] == 0.8
        assert c.alpha[1] == 0.0 and c.beta[1] == 0.0

    def test_fully_transparent_foliage(self):
        c = assign_coefficients(LabeledCloud([[0, 0, 0]], [FOLIAGE]), 1.0)
        assert c.alpha[0] == 0.0 and c.beta[0] == 1.0

    @pytest.mark.parametrize("beta_f", [0.0, -0.1, 1.01])
    def test_out_of_range(self, beta_f):
        with pytest.raises(ValueError):
            assign_coefficients(LabeledCloud([[0, 0, 0]], [FOLIAGE]), beta_f)


class TestVoxelize:
    def test_coincident_points_make_one_voxel(self):
        cloud = LabeledCloud(np.ones((10, 3)), np.full(10, FOLIAGE))
        grid = voxelize(cloud, assign_coefficients(cloud, 0.8), 0.1, 1)
        assert len(grid) == 1 and grid.weight[0] == 10

    def test_weight_filter_empties_grid(self):
        cloud = LabeledCloud(np.ones((10, 3)), np.full(10, FOLIAGE))
        with pytest.raises(EmptyGridError):
            voxelize(cloud, assign_coefficients(cloud, 0.8), 0.1, 11)

    @pytest.mark.parametrize("s_vox,w_vox", [(0.0, 1), (-1.0, 1), (0.1, -1)])
    def test_bad_arguments(self, s_vox, w_vox):
        cloud = random_cloud(0, n=5)
        with pytest.raises(ValueError):
            voxelize(cloud, assign_coefficients(cloud, 0.8), s_vox, w_vox)

    @settings(max_examples=60, deadline=None)
    @given(unit_up, st.floats(-3, 3), st.floats(-3, 3))
    def test_points_on_ray_share_a_column_top_down(self, direction, x, y):
        low = np.array([x, y, 1.0])
        high = low + 1.0 * direction
        cloud = LabeledCloud(np.array([low, high]), [FOLIAGE, BRANCH])
        grid = voxelize(cloud, assign_coefficients(cloud, 0.8), 0.1, 1, direction)
        assert len(grid) == 2 and grid.n_columns == 1
        # brute-force binning in the rotated frame
        local = cloud.xyz @ rotation_to_zenith(direction).T
        k = np.floor((local[:, 2] - local[:, 2].min()) / 0.1).astype(int)
        assert k[1] > k[0]
        # first voxel along the ray holds the upper point
        assert grid.point_voxel[1] == 0 and grid.point_voxel[0] == 1
        assert grid.ijk[0, 2] == k[1] and grid.ijk[1, 2] == k[0]

    def test_weights_conserve_points(self):
        cloud = random_cloud(3, n=500)
        grid = voxelize(cloud, assign_coefficients(cloud, 0.8), 0.2, 0, (0.3, 0.2, 0.9))
        assert grid.weight.sum() == len(cloud)
        np.testing.assert_array_equal(np.bincount(grid.point_voxel, minlength=len(grid)), grid.weight)

    def test_filtered_points_map_to_none(self):
        cloud = random_cloud(4, n=300)
        grid = voxelize(cloud, assign_coefficients(cloud, 0.8), 0.4, 3)
        assert np.all(grid.weight >= 3)
        dropped = grid.point_voxel < 0
        assert dropped.any()
        assert grid.weight.sum() == (~dropped).sum()

    def test_columns_top_down(self):
        cloud = random_cloud(5, n=800)
        grid = voxelize(cloud, assign_coefficients(cloud, 0.8), 0.2, 1, (0.5, -0.1, 0.8))
        for c in range(grid.n_columns):
            sl = slice(grid.column_start[c], grid.column_start[c + 1])
            assert np.all(grid.ijk[sl, :2] == grid.ijk[sl][0, :2])
            assert np.all(np.diff(grid.ijk[sl, 2]) < 0)

    def test_input_order_invariant(self):
        cloud = random_cloud(6, n=600)
        perm = np.random.default_rng(0).permutation(len(cloud))
        shuffled = LabeledCloud(cloud.xyz[perm], cloud.labels[perm], cloud.ground_z)
        a = voxelize(cloud, assign_coefficients(cloud, 0.7), 0.2, 1, (0.2, 0.4, 0.8))
        b = voxelize(shuffled, assign_coefficients(shuffled, 0.7), 0.2, 1, (0.2, 0.4, 0.8))
        for name in ("ijk", "alpha", "beta", "weight", "column_start"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        np.testing.assert_array_equal(a.point_voxel[perm], b.point_voxel)

    def test_voxel_coefficients_are_means(self):
        cloud = random_cloud(7, n=400, branch_share=0.4)
        coeffs = assign_coefficients(cloud, 0.8)
        grid = voxelize(cloud, coeffs, 0.3, 1)
        for v in range(len(grid)):
            members = grid.point_voxel == v
            assert grid.beta[v] == pytest.approx(coeffs.beta[members].mean(), rel=1e-15)
            assert grid.alpha[v] == pytest.approx(coeffs.alpha[members].mean(), rel=1e-15)
            if (cloud.labels[members] == BRANCH).any():
                assert grid.beta[v] < 0.8
            else:
                assert grid.beta[v] == pytest.approx(0.8, rel=1e-15)


class TestTransforms:
    def test_rotate_zero_is_identity(self):
        cloud = random_cloud(8)
        np.testing.assert_array_equal(rotate_about_trunk(cloud, 0.0).xyz, cloud.xyz)

    def test_full_turn(self):
        cloud = random_cloud(9)
        np.testing.assert_allclose(rotate_about_trunk(cloud, 360.0).xyz, cloud.xyz, rtol=0, atol=1e-9)

    def test_composition(self):
        cloud = random_cloud(10)
        twice = rotate_about_trunk(rotate_about_trunk(cloud, 90.0), 90.0)
        np.testing.assert_allclose(twice.xyz, rotate_about_trunk(cloud, 180.0).xyz, rtol=0, atol=1e-9)

    def test_rotation_direction_and_pivot(self):
        cloud = LabeledCloud([[1.0, 0.0, 0.0], [-1.0, 0.0, 1.0]], [FOLIAGE, BRANCH], 0.0)
        out = rotate_about_trunk(cloud, 90.0)
        np.testing.assert_allclose(out.xyz, [[0, 1, 0], [0, -1, 1]], atol=1e-15)
        np.testing.assert_array_equal(out.labels, cloud.labels)

    def test_offset(self):
        cloud = random_cloud(11)
        moved = offset(cloud, 0.3, -0.2)
        np.testing.assert_array_equal(moved.xyz[:, 2], cloud.xyz[:, 2])
        np.testing.assert_allclose(moved.xyz[:, :2] - cloud.xyz[:, :2], np.tile([0.3, -0.2], (len(cloud), 1)))
        assert moved.ground_z == cloud.ground_z


def test_rotation_maps_direction_to_zenith():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r = rotation_to_zenith(d)
        np.testing.assert_allclose(r @ d, [0, 0, 1], atol=1e-12)
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
