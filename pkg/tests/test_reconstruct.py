import numpy as np
import pytest

from neural_varifold.geometry import OrientedPointCloud, icosphere, sample_area_weighted
from neural_varifold.reconstruct import (
    ScalarGrid,
    augment_offsurface,
    bounding_grid,
    evaluate_reconstruction,
    evaluate_samples,
    fit_and_eval_sdf,
    fit_sdf,
    marching_cubes,
    reconstruct,
)


def sphere_cloud(k, seed=0):
    pts = sample_area_weighted(icosphere(3), k, seed).positions
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return OrientedPointCloud(pts, pts.copy())


def test_augment_rows():
    cloud = OrientedPointCloud(np.array([[1.0, 0, 0]]), np.array([[1.0, 0, 0]]))
    train = augment_offsurface(cloud, 0.1)
    np.testing.assert_allclose(train.positions, [[1, 0, 0], [0.9, 0, 0], [1.1, 0, 0]])
    np.testing.assert_allclose(train.targets, [0, -0.1, 0.1])
    assert len(augment_offsurface(sphere_cloud(50), 0.01)) == 150


def test_augment_warns_on_large_delta():
    with pytest.warns(UserWarning, match="centroid"):
        augment_offsurface(sphere_cloud(40), 1.5)
    with pytest.raises(ValueError):
        augment_offsurface(sphere_cloud(4), 0.0)


@pytest.mark.parametrize("mode", ["constant", "train", "off"])
def test_interpolates_training_targets(mode):
    train = augment_offsurface(sphere_cloud(40), 0.05)
    model = fit_sdf(train, depth=1, lam=0.0, normal_channel=mode)
    if mode == "train":
        # the grid-side normal kernel differs from the training one, so only the fit is exact
        return
    np.testing.assert_allclose(model(train.positions), train.targets, atol=1e-6)


def test_zero_targets_give_zero_field():
    train = augment_offsurface(sphere_cloud(30), 0.05)
    train = type(train)(train.positions, train.normals, np.zeros(len(train)), train.delta)
    grid = fit_and_eval_sdf(train, bounding_grid(train.positions, 6))
    assert np.all(grid.values == 0.0)


def test_sphere_sign_inside_outside():
    train = augment_offsurface(sphere_cloud(512), 0.01)
    grid = fit_and_eval_sdf(train, ScalarGrid([-1.1] * 3, [1.1] * 3, 3))
    assert grid.values[1, 1, 1] < 0
    corners = grid.values[[0, -1]][:, [0, -1]][:, :, [0, -1]]
    assert np.all(corners > 0)


def test_unknown_normal_channel():
    with pytest.raises(ValueError):
        fit_sdf(augment_offsurface(sphere_cloud(5), 0.01), normal_channel="both")


def test_grid_layout():
    grid = ScalarGrid([0, 0, 0], [1, 2, 3], (2, 3, 4))
    pts = grid.points()
    assert pts.shape == (24, 3)
    np.testing.assert_allclose(pts[1], [0, 0, 1])
    np.testing.assert_allclose(grid.spacing, [1, 1, 1])
    with pytest.raises(ValueError):
        ScalarGrid([0, 0, 0], [1, 1, 1], 1)


def test_marching_cubes_plane():
    grid = ScalarGrid([0, 0, 0], [1, 1, 1], 8)
    grid.values = (grid.points()[:, 2] - 0.5).reshape(grid.resolution)
    mesh = marching_cubes(grid)
    assert mesh.n_faces > 0
    np.testing.assert_allclose(mesh.vertices[:, 2], 0.5, atol=1e-9)
    # faces point toward increasing values (+z)
    from neural_varifold.geometry import sample_face_centers

    assert np.all(sample_face_centers(mesh).normals[:, 2] > 0.99)


def test_marching_cubes_empty():
    grid = ScalarGrid([0, 0, 0], [1, 1, 1], 4, np.ones((4, 4, 4)))
    assert marching_cubes(grid).n_faces == 0
    with pytest.raises(ValueError):
        marching_cubes(ScalarGrid([0, 0, 0], [1, 1, 1], 4))


def test_marching_cubes_sphere_sdf():
    grid = ScalarGrid([-1, -1, -1], [1, 1, 1], 64)
    grid.values = (np.linalg.norm(grid.points(), axis=1) - 0.8).reshape(grid.resolution)
    radii = np.linalg.norm(marching_cubes(grid).vertices, axis=1)
    assert np.abs(radii - 0.8).max() <= 0.02


def test_evaluate_samples():
    pts = sphere_cloud(100).positions
    out = evaluate_samples(pts, pts)
    assert out["cd"] == 0.0 and out["emd"] == 0.0
    assert np.isnan(evaluate_samples(pts, pts[:50])["emd"])


def test_self_distance_baseline():
    mesh = icosphere(3)
    out = evaluate_reconstruction(mesh, mesh, k=1024, seed=0)
    pts = sample_area_weighted(mesh, 1024, 0).positions
    from scipy.spatial import cKDTree

    spacing = np.mean(cKDTree(pts).query(pts, k=2)[0][:, 1] ** 2)
    assert 0 < out["cd"] <= 10 * spacing


def test_reconstruct_small_sphere_in_original_frame():
    cloud = sphere_cloud(400)
    moved = OrientedPointCloud(2.0 * cloud.positions + [3.0, 0, 0], cloud.normals)
    mesh, grid = reconstruct(moved, resolution=24)
    assert mesh.n_faces > 0
    radii = np.linalg.norm(mesh.vertices - [3.0, 0, 0], axis=1)
    assert np.abs(radii - 2.0).mean() < 0.05
    from neural_varifold.geometry import sample_face_centers

    faces = sample_face_centers(mesh)
    assert np.mean(np.einsum("ij,ij->i", faces.positions - [3.0, 0, 0], faces.normals) > 0) > 0.99
