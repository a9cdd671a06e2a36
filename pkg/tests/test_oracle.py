import math

import numpy as np
import pytest

from probsparse.oracle import (
    oracle_attention,
    oracle_kl,
    oracle_kl_from_probs,
    oracle_kl_reverse,
    oracle_topk,
)
from probsparse.sparse import kl_from_uniform


def test_attention_single_key(rng):
    q = rng.standard_normal((3, 2))
    v = rng.standard_normal((1, 4))
    np.testing.assert_allclose(oracle_attention(q, rng.standard_normal((1, 2)), v), np.repeat(v, 3, 0))


def test_attention_zero_query(rng):
    k, v = rng.standard_normal((6, 2)), rng.standard_normal((6, 3))
    np.testing.assert_allclose(oracle_attention(np.zeros((2, 2)), k, v), np.tile(v.mean(0), (2, 1)), atol=1e-15)


def test_kl_uniform_is_zero(rng):
    k = rng.standard_normal((7, 3))
    assert oracle_kl(np.zeros(3), k) == pytest.approx(0.0, abs=1e-15)
    assert oracle_kl_reverse(np.zeros(3), k) == pytest.approx(0.0, abs=1e-15)


def test_kl_near_point_mass_on_two_outcomes():
    eps = 1e-9
    assert oracle_kl_from_probs([1 - eps, eps]) == pytest.approx(math.log(2), abs=1e-7)


def test_kl_directions_differ_in_general(rng):
    q, k = rng.standard_normal(4), rng.standard_normal((16, 4))
    assert abs(oracle_kl(q, k) - oracle_kl_reverse(q, k)) > 1e-4


def test_library_kl_matches_reverse_direction(rng):
    for _ in range(200):
        length, d = int(rng.integers(1, 65)), int(rng.integers(1, 17))
        q, k = rng.standard_normal(d) * 2, rng.standard_normal((length, d))
        assert kl_from_uniform(q, k) == pytest.approx(oracle_kl_reverse(q, k), abs=1e-9)


def test_topk_all():
    assert oracle_topk([3.0, 1.0, 2.0], 3) == [0, 1, 2]


def test_topk_ties_go_low():
    assert oracle_topk([1.0, 1.0, 1.0, 1.0], 2) == [0, 1]


def test_topk_range():
    with pytest.raises(ValueError):
        oracle_topk([1.0], 2)
