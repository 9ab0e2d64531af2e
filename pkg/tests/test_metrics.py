import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neural_varifold.metrics import chamfer, emd_exact


def brute_emd(a, b):
    return min(np.linalg.norm(a - b[list(p)], axis=1).sum() for p in itertools.permutations(range(len(a))))


def test_chamfer_hand_values(rng):
    a = rng.standard_normal((20, 3))
    assert chamfer(a, a) == 0.0
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == pytest.approx(2.0)
    assert chamfer([[0, 0, 0], [1, 0, 0]], [[0, 0, 0]]) == pytest.approx(0.5)


def test_chamfer_variants():
    a, b = [[0.0, 0, 0], [2, 0, 0]], [[0.0, 0, 0]]
    assert chamfer(a, b, squared=False) == pytest.approx(1.0)
    assert chamfer(a, b, reduction="sum") == pytest.approx(4.0)
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), b)
    with pytest.raises(ValueError):
        chamfer(a, b, reduction="max")


def test_chamfer_uniform_offset():
    # points far apart relative to the 0.5 shift: every nearest neighbour is the shifted twin
    a = 10.0 * np.eye(3)
    assert chamfer(a, a + [0.5, 0, 0]) == pytest.approx(0.25 + 0.25)


def test_emd_hand_values(rng):
    a = rng.standard_normal((8, 3))
    plan = emd_exact(a, a)
    assert plan.cost == 0.0
    np.testing.assert_array_equal(plan.assignment, np.arange(8))
    plan = emd_exact([[0.0, 0, 0], [2, 0, 0]], [[1.0, 0, 0], [3, 0, 0]])
    assert plan.cost == pytest.approx(2.0)
    np.testing.assert_array_equal(plan.assignment, [0, 1])


def test_emd_unbalanced():
    with pytest.raises(ValueError, match="balanced"):
        emd_exact(np.zeros((2, 3)), np.zeros((3, 3)))


def test_emd_matches_brute_force_m6(rng):
    a, b = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    assert abs(emd_exact(a, b).cost - brute_emd(a, b)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5))
def test_emd_properties(seed, m):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((m, 3)), rng.standard_normal((m, 3))
    plan = emd_exact(a, b)
    assert sorted(plan.assignment) == list(range(m))
    assert plan.cost == pytest.approx(np.linalg.norm(a - b[plan.assignment], axis=1).sum())
    assert abs(plan.cost - brute_emd(a, b)) <= 1e-9
    assert emd_exact(b, a).cost == pytest.approx(plan.cost)
    assert chamfer(a, b) >= 0
