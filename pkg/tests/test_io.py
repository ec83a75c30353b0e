"""Point cloud and pose file round-trips, parse errors, config loading."""

import numpy as np
import pytest

from voxloc.cloud import PointCloud
from voxloc.config import PipelineConfig, load_config, parse_config
from voxloc.errors import ConfigError, DataError, ParseError
from voxloc.io import read_ply, read_poses, write_ply, write_poses
from voxloc.transform import RigidTransform, Trajectory, rotation_exp


def _random_rotation(rng):
    return rotation_exp(rng.normal(size=3))


# -- PLY ---------------------------------------------------------------------


def test_read_minimal_ascii(tmp_path):
    path = tmp_path / "tri.ply"
    path.write_text(
        "ply\n"
        "format ascii 1.0\n"
        "element vertex 3\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
        "0 0 0\n"
        "1 0 0\n"
        "0 1 0\n"
    )
    cloud = read_ply(path)
    assert len(cloud) == 3
    assert cloud.colors is None
    assert cloud.labels is None
    np.testing.assert_allclose(cloud.points[1], [1, 0, 0])


def test_read_ascii_colors_preserved(tmp_path):
    path = tmp_path / "colored.ply"
    path.write_text(
        "ply\n"
        "format ascii 1.0\n"
        "element vertex 2\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
        "0 0 0 255 0 10\n"
        "1 1 1 0 128 255\n"
    )
    cloud = read_ply(path)
    assert cloud.colors.dtype == np.uint8
    np.testing.assert_array_equal(cloud.colors, [[255, 0, 10], [0, 128, 255]])


def test_unknown_property_and_foreign_element_skipped(tmp_path):
    path = tmp_path / "extra.ply"
    path.write_text(
        "ply\n"
        "format ascii 1.0\n"
        "element vertex 1\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property float intensity\n"
        "end_header\n"
        "1 2 3 0.5\n"
    )
    cloud = read_ply(path)
    assert len(cloud) == 1
    np.testing.assert_allclose(cloud.points[0], [1, 2, 3])


def test_binary_roundtrip_positions_bit_exact(tmp_path, rng):
    pts = rng.normal(scale=50.0, size=(10_000, 3))
    colors = rng.integers(0, 256, size=(10_000, 3), dtype=np.uint8)
    labels = rng.integers(0, 5, size=10_000, dtype=np.int32)
    cloud = PointCloud(pts, colors, labels)
    path = tmp_path / "round.ply"
    write_ply(path, cloud, binary=True)
    back = read_ply(path)
    assert np.array_equal(back.points, pts)  # bit-exact, no tolerance
    np.testing.assert_array_equal(back.colors, colors)
    np.testing.assert_array_equal(back.labels, labels)


def test_ascii_roundtrip_within_printed_precision(tmp_path, rng):
    pts = rng.normal(size=(50, 3))
    path = tmp_path / "ascii.ply"
    write_ply(path, PointCloud(pts), binary=False)
    back = read_ply(path)
    np.testing.assert_allclose(back.points, pts, atol=1e-15, rtol=1e-15)


def test_empty_cloud_roundtrip(tmp_path):
    path = tmp_path / "empty.ply"
    write_ply(path, PointCloud(np.empty((0, 3))))
    assert len(read_ply(path)) == 0


def test_labels_written_as_vertex_property(tmp_path):
    path = tmp_path / "lab.ply"
    cloud = PointCloud(np.zeros((2, 3)), labels=np.array([1, 4]))
    write_ply(path, cloud, binary=False)
    header = path.read_text().split("end_header")[0]
    assert "label" in header


def test_malformed_header_reports_line(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text(
        "ply\n"
        "format ascii 1.0\n"
        "element vertex notanumber\n"
        "end_header\n"
    )
    with pytest.raises(ParseError) as err:
        read_ply(path)
    assert err.value.line == 3


def test_not_a_ply_rejected(tmp_path):
    path = tmp_path / "nope.ply"
    path.write_text("solid something\nend_header\n")
    with pytest.raises(ParseError):
        read_ply(path)


def test_nonfinite_coordinate_rejected(tmp_path):
    path = tmp_path / "nan.ply"
    path.write_text(
        "ply\n"
        "format ascii 1.0\n"
        "element vertex 1\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
        "nan 0 0\n"
    )
    with pytest.raises(DataError):
        read_ply(path)


# -- poses -------------------------------------------------------------------


def test_identity_pose_line(tmp_path):
    path = tmp_path / "id.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
    traj = read_poses(path)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj[0].rotation, np.eye(3))
    np.testing.assert_array_equal(traj[0].translation, np.zeros(3))


def test_pose_roundtrip_tight(tmp_path, rng):
    poses = [
        RigidTransform(_random_rotation(rng), rng.normal(scale=10.0, size=3))
        for _ in range(20)
    ]
    path = tmp_path / "poses.txt"
    write_poses(path, Trajectory(poses))
    back = read_poses(path)
    assert len(back) == 20
    for a, b in zip(poses, back):
        assert np.linalg.norm(a.rotation - b.rotation) < 1e-9
        assert np.linalg.norm(a.translation - b.translation) < 1e-9


def test_101_pose_lines(tmp_path):
    line = "1 0 0 0 0 1 0 0 0 0 1 0\n"
    path = tmp_path / "many.txt"
    path.write_text(line * 101)
    assert len(read_poses(path)) == 101


def test_wrong_token_count_reports_line(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 2 3\n")
    with pytest.raises(ParseError) as err:
        read_poses(path)
    assert err.value.line == 2


def test_slightly_drifted_rotation_is_fixed(tmp_path):
    rot = np.eye(3)
    rot[0, 0] += 3e-8  # drift between the keep and reject thresholds
    vals = np.hstack([np.column_stack([rot, np.zeros(3)]).ravel()])
    path = tmp_path / "drift.txt"
    path.write_text(" ".join(repr(float(v)) for v in vals) + "\n")
    traj = read_poses(path)
    r = traj[0].rotation
    assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-12


def test_badly_drifted_rotation_rejected(tmp_path):
    rot = np.eye(3) * 1.01
    vals = np.column_stack([rot, np.zeros(3)]).ravel()
    path = tmp_path / "worse.txt"
    path.write_text(" ".join(str(v) for v in vals) + "\n")
    with pytest.raises(DataError):
        read_poses(path)


def test_empty_trajectory_writes_empty_file(tmp_path):
    path = tmp_path / "none.txt"
    write_poses(path, Trajectory([]))
    assert path.read_text() == ""


def test_pose_precision_at_least_17_digits(tmp_path):
    t = np.array([1.0 / 3.0, 0.1, -2.0 / 7.0])
    path = tmp_path / "prec.txt"
    write_poses(path, Trajectory([RigidTransform(np.eye(3), t)]))
    tokens = path.read_text().split()
    assert float(tokens[3]) == t[0]
    assert float(tokens[7]) == t[1]
    assert float(tokens[11]) == t[2]


# -- config ------------------------------------------------------------------


def test_empty_config_gives_defaults():
    cfg = parse_config({})
    assert cfg.ransac_distance_threshold == 2.0
    assert cfg.voxel_size_fine == 0.10
    assert cfg.voxel_size_coarse == 1.0
    assert cfg.fpfh_radius == 5.0


def test_explicit_fine_size_accepted():
    assert parse_config({"voxel_size_fine": 0.1}).voxel_size_fine == 0.1


def test_coarse_smaller_than_fine_rejected():
    with pytest.raises(ConfigError):
        parse_config({"voxel_size_coarse": 0.05, "voxel_size_fine": 0.1})


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match="ransac_distance_treshold"):
        parse_config({"ransac_distance_treshold": 2.0})


def test_config_file_loading(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"cluster_min_points": 12}')
    cfg = load_config(path)
    assert cfg.cluster_min_points == 12
    assert cfg.icp_max_iterations == PipelineConfig().icp_max_iterations


def test_invalid_value_names_field():
    with pytest.raises(ConfigError, match="ransac_confidence"):
        parse_config({"ransac_confidence": 1.5})
