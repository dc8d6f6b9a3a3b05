import numpy as np
import pytest

from rownav.cloud_io import read_cloud, read_pgm, write_cloud, write_pgm
from rownav.pipeline import PipelineConfig, project_to_grid
from rownav.sim import WorldSpec, generate_world, export_world_xyz


def test_xyz_round_trip(tmp_path):
    cloud = np.random.default_rng(0).uniform(-5, 5, size=(40, 3))
    path = str(tmp_path / "cloud.xyz")
    write_cloud(path, cloud)
    back = read_cloud(path)
    np.testing.assert_allclose(back, cloud, atol=1e-6)


def test_binary_round_trip(tmp_path):
    cloud = np.random.default_rng(1).uniform(-5, 5, size=(40, 3))
    path = str(tmp_path / "cloud.bin")
    write_cloud(path, cloud)
    back = read_cloud(path)
    np.testing.assert_allclose(back, cloud, atol=1e-6)  # float32 storage


def test_unknown_extension_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_cloud(str(tmp_path / "cloud.csv"), np.zeros((1, 3)))


def test_truncated_binary_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 10)  # not a multiple of 12
    with pytest.raises(ValueError):
        read_cloud(str(path))


def test_pgm_round_trip(tmp_path):
    grid = project_to_grid([(1.0, 0.5, 1.0), (2.0, -0.7, 1.0)],
                           PipelineConfig())
    path = str(tmp_path / "grid.pgm")
    write_pgm(grid, path)
    with open(path) as fh:
        header = fh.readline().strip()
    assert header == "P2"
    back = read_pgm(path)
    np.testing.assert_array_equal(back, grid.occupied)


def test_world_export_feeds_pipeline(tmp_path):
    world = generate_world(WorldSpec(row_length=6.0, seed=9))
    path = str(tmp_path / "world.xyz")
    export_world_xyz(world, path)
    cloud = read_cloud(path)
    assert cloud.shape == world.points.shape
    np.testing.assert_allclose(cloud, world.points, atol=1e-6)
