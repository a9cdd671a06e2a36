import math

import numpy as np
import pytest

from probsparse.attention import (
    ProjectionWeights,
    attention_dense,
    attention_row,
    init_heads,
    multi_head_attention,
    project_qkv,
)
from probsparse.numeric import ConfigError, ShapeError, identity, make_rng, matmul
from probsparse.oracle import oracle_attention, oracle_matmul
from probsparse.sparse import SparsityParams, attention_prob_sparse, select_queries

from conftest import qkv


def test_project_identity_input_returns_weights(rng):
    w = ProjectionWeights(*(rng.standard_normal((5, 3)) for _ in range(3)))
    q, k, v = project_qkv(identity(5), w)
    assert np.array_equal(q, w.w_q) and np.array_equal(k, w.w_k) and np.array_equal(v, w.w_v)


def test_project_single_row_shape(rng):
    w = ProjectionWeights(*(rng.standard_normal((6, 2)) for _ in range(3)))
    assert all(m.shape == (1, 2) for m in project_qkv(rng.standard_normal((1, 6)), w))


def test_project_matches_loop_products(rng):
    x = rng.standard_normal((4, 6))
    w = ProjectionWeights(*(rng.standard_normal((6, 3)) for _ in range(3)))
    for got, wm in zip(project_qkv(x, w), (w.w_q, w.w_k, w.w_v)):
        np.testing.assert_allclose(got, oracle_matmul(x, wm), atol=1e-13)


def test_project_shape_mismatch(rng):
    w = ProjectionWeights(*(np.ones((4, 2)) for _ in range(3)))
    with pytest.raises(ShapeError):
        project_qkv(np.ones((3, 5)), w)


def test_projection_shapes_must_agree():
    with pytest.raises(ShapeError):
        ProjectionWeights(np.ones((4, 2)), np.ones((4, 3)), np.ones((4, 2)))


class TestDense:
    def test_single_key_returns_its_value(self, rng, backend):
        q = rng.standard_normal((5, 3))
        k, v = rng.standard_normal((1, 3)), rng.standard_normal((1, 4))
        out = attention_dense(q, k, v).values
        np.testing.assert_allclose(out, np.repeat(v, 5, axis=0), rtol=0, atol=1e-15)

    def test_zero_queries_average_values(self, rng, backend):
        _, k, v = qkv(rng, 9, 4)
        out = attention_dense(np.zeros((9, 4)), k, v).values
        np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (9, 1)), atol=1e-14)

    def test_matches_row_form(self, rng, backend):
        q, k, v = qkv(rng, 8, 4)
        rows = np.stack([attention_row(q[i], k, v) for i in range(8)])
        np.testing.assert_allclose(attention_dense(q, k, v).values, rows, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("length,d", [(1, 1), (7, 3), (64, 16)])
    def test_matches_loop_oracle(self, rng, backend, length, d):
        q, k, v = qkv(rng, length, d)
        np.testing.assert_allclose(attention_dense(q, k, v).values, oracle_attention(q, k, v), atol=1e-10)

    def test_rows_in_convex_hull(self, rng):
        q, k, v = qkv(rng, 32, 8, scale=4.0)
        out = attention_dense(q, k, v).values
        assert (out >= v.min(axis=0) - 1e-12).all() and (out <= v.max(axis=0) + 1e-12).all()

    def test_key_value_permutation_invariance(self, rng):
        q, k, v = qkv(rng, 40, 8)
        perm = make_rng(1).permutation(40)
        np.testing.assert_allclose(
            attention_dense(q, k, v).values, attention_dense(q, k[perm], v[perm]).values, rtol=0, atol=1e-12
        )

    def test_scaling_q_and_k_scales_scores(self, rng):
        q, k, v = qkv(rng, 16, 4)
        s = 2.7
        raw = s * (q @ k.T) / 2.0
        p = np.exp(raw - raw.max(axis=1, keepdims=True))
        ref = (p / p.sum(axis=1, keepdims=True)) @ v
        out = attention_dense(q * math.sqrt(s), k * math.sqrt(s), v).values
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-10)

    def test_weights_returned_on_request(self, rng):
        q, k, v = qkv(rng, 6, 2)
        res = attention_dense(q, k, v, return_weights=True)
        assert res.weights.shape == (6, 6)
        np.testing.assert_allclose(res.weights.sum(axis=1), 1.0, atol=1e-14)
        assert attention_dense(q, k, v).weights is None

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            attention_dense(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))
        with pytest.raises(ShapeError):
            attention_dense(np.ones((2, 3)), np.ones((2, 3)), np.ones((3, 3)))


class TestRow:
    def test_single_key(self, rng):
        v = rng.standard_normal((1, 3))
        assert np.allclose(attention_row(rng.standard_normal(2), rng.standard_normal((1, 2)), v), v[0])

    def test_zero_query_is_mean(self, rng):
        _, k, v = qkv(rng, 5, 3)
        np.testing.assert_allclose(attention_row(np.zeros(3), k, v), v.mean(axis=0), atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            attention_row(np.ones(3), np.ones((4, 2)), np.ones((4, 2)))


class TestMultiHead:
    def test_single_head_collapses_to_dense(self, rng):
        x = rng.standard_normal((10, 8))
        heads = init_heads(8, 1, rng)
        q, k, v = project_qkv(x, heads[0])
        np.testing.assert_allclose(
            multi_head_attention(x, heads), attention_dense(q, k, v).values, rtol=0, atol=1e-15
        )

    def test_output_projection_applied(self, rng):
        x = rng.standard_normal((5, 4))
        heads = init_heads(4, 2, rng)
        w_o = rng.standard_normal((4, 4))
        np.testing.assert_allclose(
            multi_head_attention(x, heads, w_o=w_o), multi_head_attention(x, heads) @ w_o, atol=1e-13
        )

    def test_reference_model_shape(self, rng):
        # 256-dim attention with 4 heads
        x = rng.standard_normal((12, 256))
        assert multi_head_attention(x, init_heads(256, 4, rng)).shape == (12, 256)

    def test_sparse_full_rate_equals_dense(self, rng, backend):
        x = rng.standard_normal((20, 8))
        heads = init_heads(8, 2, rng)
        params = SparsityParams(1.0, 1.0)
        sub = make_rng(5)

        def sparse_fn(q, k, v):
            return attention_prob_sparse(q, k, v, select_queries(q, k, params, sub))

        np.testing.assert_allclose(
            multi_head_attention(x, heads, sparse_fn), multi_head_attention(x, heads), rtol=0, atol=1e-9
        )

    def test_indivisible_heads(self, rng):
        with pytest.raises(ConfigError):
            init_heads(10, 4, rng)
        heads = init_heads(9, 3, rng)
        with pytest.raises(ConfigError):
            multi_head_attention(rng.standard_normal((3, 9)), heads[:2])

    def test_per_head_callables(self, rng):
        x = rng.standard_normal((4, 6))
        heads = init_heads(6, 3, rng)
        calls = []

        def make(h):
            def fn(q, k, v):
                calls.append(h)
                return attention_dense(q, k, v)
            return fn

        multi_head_attention(x, heads, [make(h) for h in range(3)])
        assert calls == [0, 1, 2]
        with pytest.raises(ConfigError):
            multi_head_attention(x, heads, [make(0)])
