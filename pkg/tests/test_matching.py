import numpy as np
import pytest
import torch

from neural_varifold.geometry import TriangleMesh, icosphere, sample_face_centers
from neural_varifold.matching import (
    LOSSES,
    DeformationNet,
    DivergenceError,
    MatchConfig,
    cross_evaluate,
    deform,
    loss_and_grad,
    match_shapes,
    reference_loss,
    save_trace_csv,
)
from neural_varifold.metrics import chamfer

from conftest import bipyramid


def test_identity_and_translation():
    mesh = icosphere(1)
    net = DeformationNet(seed=3)
    np.testing.assert_array_equal(deform(net, mesh).vertices, mesh.vertices)
    with torch.no_grad():
        net.layers[-1].bias.copy_(torch.tensor([0.1, -0.2, 0.3], dtype=torch.float64))
    np.testing.assert_allclose(deform(net, mesh).vertices, mesh.vertices + [0.1, -0.2, 0.3])


def test_random_net_preserves_structure():
    mesh = icosphere(2)
    out = deform(DeformationNet(seed=1, output_scale=1.0), mesh)
    assert (out.n_vertices, out.n_faces) == (mesh.n_vertices, mesh.n_faces)
    np.testing.assert_array_equal(out.faces, mesh.faces)


def test_numpy_forward_matches_torch():
    net = DeformationNet(seed=2, output_scale=0.5)
    x = np.random.default_rng(0).standard_normal((7, 3))
    with torch.no_grad():
        expected = net(torch.from_numpy(x)).numpy()
    np.testing.assert_allclose(net.numpy_forward(x), expected, atol=1e-14)


def test_config_validation():
    assert MatchConfig("ntk2").depth == 9
    assert MatchConfig("cd").kernel is None
    with pytest.raises(ValueError):
        MatchConfig("l2")
    with pytest.raises(ValueError):
        MatchConfig(lr=0.0)


def test_ntk1_loss_zero_at_target():
    mesh = bipyramid()
    loss, grads = loss_and_grad(DeformationNet(0), mesh, sample_face_centers(mesh), MatchConfig("ntk1"))
    assert abs(loss) <= 1e-9
    assert np.sqrt(sum((g**2).sum() for g in grads)) <= 1e-6


def test_cd_gradient_hand_value():
    tri = TriangleMesh(np.array([[-1.0, -1, 0], [2, -1, 0], [-1, 2, 0]]), np.array([[0, 1, 2]]))
    assert np.allclose(sample_face_centers(tri).positions, 0)
    target = sample_face_centers(tri.with_vertices(tri.vertices + [1.0, 0, 0]))
    loss, grads = loss_and_grad(DeformationNet(0), tri, target, MatchConfig("cd"))
    assert loss == pytest.approx(2.0)
    # output-layer bias gradient: d/db (|c+b-t|^2 + |t-c-b|^2) = 2 * 2 * (c - t)
    np.testing.assert_allclose(grads[-1], [-4.0, 0, 0], atol=1e-12)


def fd_errors(loss, seed, n_coords=20, h=1e-5):
    source = bipyramid()
    target = sample_face_centers(bipyramid((1.2, 0.8, 1.1), twist=0.3))
    config = MatchConfig(loss)
    net = DeformationNet(seed=seed, output_scale=0.1)
    _, grads = loss_and_grad(net, source, target, config)
    params = net.numpy_parameters()
    rng = np.random.default_rng(100 + seed)
    errs = []
    for _ in range(n_coords):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(n)) for n in params[k].shape)
        plus = [p.copy() for p in params]
        plus[k][idx] += h
        minus = [p.copy() for p in params]
        minus[k][idx] -= h
        fd = (reference_loss(plus, source, target, config) - reference_loss(minus, source, target, config)) / (2 * h)
        g = grads[k][idx]
        errs.append(abs(fd - g) / max(abs(g), abs(fd), 1e-8))
    return errs


@pytest.mark.parametrize("loss", LOSSES)
def test_gradient_matches_finite_differences(loss):
    assert max(fd_errors(loss, seed=0)) < 1e-4


def test_zero_iterations_returns_source():
    mesh = bipyramid()
    trace = match_shapes(mesh, bipyramid((1.3, 1, 1)), MatchConfig("cd", iterations=0))
    assert len(trace) == 0
    np.testing.assert_array_equal(trace.mesh.vertices, mesh.vertices)


def test_match_deterministic(tmp_path):
    src, tgt = bipyramid(), bipyramid((1.3, 0.9, 1.0))
    a = match_shapes(src, tgt, MatchConfig("ntk2", iterations=15, seed=4))
    b = match_shapes(src, tgt, MatchConfig("ntk2", iterations=15, seed=4))
    assert a.losses == b.losses
    np.testing.assert_array_equal(a.mesh.vertices, b.mesh.vertices)
    save_trace_csv(a, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,loss,seconds" and len(lines) == 16


def test_emd_requires_balanced_target():
    with pytest.raises(ValueError, match="EMD"):
        match_shapes(bipyramid(), icosphere(1), MatchConfig("emd", iterations=1))


def test_divergence_raises_with_trace():
    config = MatchConfig("cd", iterations=5, lr=1e300)
    with pytest.raises(DivergenceError) as info:
        match_shapes(bipyramid(), bipyramid((2, 1, 1)), config)
    assert info.value.trace.mesh is not None


@pytest.mark.slow
def test_ntk1_recovers_scaled_sphere():
    src = icosphere(1)
    tgt = icosphere(1, radius=1.3)
    trace = match_shapes(src, tgt, MatchConfig("ntk1", iterations=300))
    a, b = sample_face_centers(src).positions, sample_face_centers(tgt).positions
    assert chamfer(sample_face_centers(trace.mesh).positions, b) <= 0.1 * chamfer(a, b)


def test_cross_evaluate():
    mesh = bipyramid()
    table = cross_evaluate(mesh, mesh)
    assert set(table) == {"cd", "emd", "ct", "ntk1", "ntk2"}
    assert all(abs(v) <= 1e-8 for v in table.values())
    far = TriangleMesh(10.0 * np.eye(3), np.array([[0, 1, 2]]))
    shifted = far.with_vertices(far.vertices + [0.5, 0, 0])
    assert cross_evaluate(far, shifted)["cd"] == pytest.approx(0.5)
    assert np.isnan(cross_evaluate(mesh, icosphere(1))["emd"])
