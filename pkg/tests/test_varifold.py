import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neural_varifold.geometry import OrientedPointCloud
from neural_varifold.ntk import ntk_mlp
from neural_varifold.varifold import (
    KernelConfig,
    cloud_kernel,
    load_gram_csv,
    pairwise_cloud_gram,
    pointwise_gram,
    pointwise_gram_ct,
    pointwise_gram_ntk1,
    pointwise_gram_ntk2,
    save_gram_csv,
    varifold_distance,
)

from conftest import random_cloud


def point(pos, nrm):
    return OrientedPointCloud(np.array([pos], float), np.array([nrm], float))


def test_ntk1_hand_values():
    p = point([1, 0, 0], [0, 0, 1])
    assert pointwise_gram_ntk1(p, p, 1)[0, 0] == pytest.approx(9 / 4, abs=1e-12)
    q = point([0, 1, 0], [1, 0, 0])
    assert pointwise_gram_ntk1(p, q, 1)[0, 0] == pytest.approx(1 / (2 * np.pi) ** 2, abs=1e-12)


def test_ntk2_hand_values():
    p = point([1, 0, 0], [0, 0, 1])
    assert pointwise_gram_ntk2(p, p, 1)[0, 0] == pytest.approx(3.0, abs=1e-12)
    q = point([0, 1, 0], [1, 0, 0])
    assert pointwise_gram_ntk2(p, q, 1)[0, 0] == pytest.approx(2 / (2 * np.pi), abs=1e-12)


def test_ct_values():
    p = point([0, 0, 0], [0, 0, 1])
    assert pointwise_gram_ct(p, point([0, 0, 0], [0, 0, -1]))[0, 0] == pytest.approx(1.0)
    assert pointwise_gram_ct(p, point([0.3, 0, 0], [0, 0, 1]), 0.3)[0, 0] == pytest.approx(np.exp(-1))
    assert pointwise_gram_ct(p, point([5, 1, 0], [1, 0, 0]))[0, 0] == 0.0


def test_config_defaults_and_errors():
    assert KernelConfig("ntk1").depth == 5
    assert KernelConfig("NTK2").depth == 9
    with pytest.raises(ValueError):
        KernelConfig("rbf")
    with pytest.raises(ValueError):
        KernelConfig("ct", ct_sigma=0.0)
    with pytest.raises(ValueError):
        KernelConfig("ntk1", aggregation="max")


def test_single_point_cloud_kernel_equals_pointwise():
    p = point([0.2, 0.1, -0.5], [0, 1, 0])
    cfg = KernelConfig("ntk1")
    assert cloud_kernel(p, p, cfg) == pytest.approx(pointwise_gram(p, p, cfg)[0, 0])


def test_ct_self_kernel_positive(rng):
    a = random_cloud(rng, 10)
    cfg = KernelConfig("ct")
    assert cloud_kernel(a, a, cfg) >= np.mean(np.diag(pointwise_gram(a, a, cfg))) / len(a) > 0


@pytest.mark.parametrize("family", ["ntk1", "ntk2", "ct"])
def test_two_point_aggregation(rng, family):
    a = random_cloud(rng, 2)
    cfg = KernelConfig(family)
    block = pointwise_gram(a, a, cfg)
    assert cloud_kernel(a, a, cfg) == pytest.approx((block[0, 0] + block[0, 1] + block[1, 0] + block[1, 1]) / 4)
    total = KernelConfig(family, aggregation="sum")
    assert cloud_kernel(a, a, total) == pytest.approx(block.sum())


def test_distance_identity_and_singletons():
    p, q = point([0, 0, 0], [0, 0, 1]), point([1, 0, 0], [0, 1, 0])
    cfg = KernelConfig("ntk1", 3)
    assert varifold_distance(p, p, cfg) <= 1e-9
    k = lambda u, v: pointwise_gram(u, v, cfg)[0, 0]
    assert varifold_distance(p, q, cfg) == pytest.approx(np.sqrt(k(p, p) - 2 * k(p, q) + k(q, q)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["ntk1", "ntk2", "ct"]))
def test_distance_invariant_to_point_order(seed, family):
    rng = np.random.default_rng(seed)
    a, b = random_cloud(rng, 12), random_cloud(rng, 9)
    cfg = KernelConfig(family)
    d = varifold_distance(a, b, cfg)
    assert varifold_distance(a.permuted(rng.permutation(12)), b, cfg) == pytest.approx(d, rel=1e-6, abs=1e-9)
    assert varifold_distance(b, a, cfg) == pytest.approx(d, rel=1e-10, abs=1e-12)


def test_ntk1_is_rotation_invariant(rng):
    from scipy.spatial.transform import Rotation

    a, b = random_cloud(rng, 10), random_cloud(rng, 10)
    rot = Rotation.random(random_state=3).as_matrix()
    turn = lambda c: OrientedPointCloud(c.positions @ rot.T, c.normals @ rot.T)
    cfg = KernelConfig("ntk1", 2)
    assert varifold_distance(turn(a), turn(b), cfg) == pytest.approx(varifold_distance(a, b, cfg), rel=1e-6)


def test_pairwise_gram(rng):
    clouds = [random_cloud(rng, int(m)) for m in rng.integers(3, 20, size=5)]
    cfg = KernelConfig("ntk1")
    gram = pairwise_cloud_gram(clouds, config=cfg)
    brute = np.array([[cloud_kernel(a, b, cfg) for b in clouds] for a in clouds])
    np.testing.assert_allclose(gram, brute, rtol=1e-12)
    assert np.array_equal(gram, gram.T)
    np.testing.assert_allclose(pairwise_cloud_gram(clouds, config=cfg, threads=3), gram, rtol=1e-14)
    np.testing.assert_allclose(pairwise_cloud_gram(clouds[:2], clouds, config=cfg), gram[:2], rtol=1e-12)


def test_pairwise_gram_small_cases(rng):
    a = random_cloud(rng, 7)
    cfg = KernelConfig("ct")
    assert pairwise_cloud_gram([a], config=cfg)[0, 0] == pytest.approx(cloud_kernel(a, a, cfg))
    gram = pairwise_cloud_gram([a, a, a], config=cfg)
    np.testing.assert_allclose(gram, gram[0, 0])
    with pytest.raises(ValueError):
        pairwise_cloud_gram([], config=cfg)


def test_pairwise_gram_blocks(monkeypatch, rng):
    import neural_varifold.varifold as vf

    clouds = [random_cloud(rng, 6) for _ in range(4)]
    full = pairwise_cloud_gram(clouds)
    monkeypatch.setattr(vf, "_BLOCK_ENTRIES", 10)
    np.testing.assert_allclose(pairwise_cloud_gram(clouds), full, rtol=1e-13)


def test_gram_csv_round_trip(tmp_path, rng):
    cfg = KernelConfig("ntk2", 4, aggregation="sum")
    gram = pairwise_cloud_gram([random_cloud(rng, 5) for _ in range(3)], config=cfg)
    save_gram_csv(gram, tmp_path / "g.csv", cfg)
    back, cfg_back = load_gram_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(back, gram)
    assert cfg_back == cfg


def test_self_kernel_matches_ntk_definition(rng):
    a = random_cloud(rng, 6)
    block = ntk_mlp(a.positions, a.positions, 5) * ntk_mlp(a.normals, a.normals, 5)
    assert cloud_kernel(a, a, KernelConfig("ntk1")) == pytest.approx(block.mean(), rel=1e-14)
