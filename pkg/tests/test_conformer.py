import math
from dataclasses import replace

import numpy as np
import pytest

from probsparse.conformer import (
    EncoderConfig,
    conformer_block_forward,
    conv_module_forward,
    encoder_forward,
    ffn_forward,
    init_block_weights,
    init_encoder_weights,
    layer_norm,
    zero_block_weights,
)
from probsparse.numeric import ConfigError, ShapeError, make_rng
from probsparse.oracle import oracle_conv_module, oracle_ffn
from probsparse.sparse import SparsityParams, attention_prob_sparse, select_queries

SMALL = EncoderConfig(num_layers=16, d_model=16, heads=4, d_ff=32, kernel_size=3)
DEFAULT = EncoderConfig()


def _sparse_fn(params, rng):
    def fn(q, k, v):
        return attention_prob_sparse(q, k, v, select_queries(q, k, params, rng))
    return fn


def test_default_encoder_config():
    assert (DEFAULT.num_layers, DEFAULT.d_model, DEFAULT.heads, DEFAULT.d_ff, DEFAULT.kernel_size) == (16, 256, 4, 1024, 3)


@pytest.mark.parametrize("kw", [dict(heads=3), dict(kernel_size=4), dict(attn_mode="linear"), dict(num_layers=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        replace(SMALL, **kw)


class TestFeedForward:
    def test_zero_weights_give_zero(self, rng):
        w = zero_block_weights(SMALL).ffn1
        assert not ffn_forward(rng.standard_normal((5, 16)), w).any()

    def test_single_frame_shape(self, rng):
        w = init_block_weights(SMALL, rng).ffn1
        assert ffn_forward(rng.standard_normal((1, 16)), w).shape == (1, 16)

    def test_matches_loop_oracle(self, rng):
        cfg = replace(SMALL, d_model=8, heads=2, d_ff=12)
        w = init_block_weights(cfg, rng).ffn1
        w.ln_scale, w.ln_shift = rng.uniform(0.5, 2, 8), rng.standard_normal(8)
        x = rng.standard_normal((4, 8))
        np.testing.assert_allclose(ffn_forward(x, w), oracle_ffn(x, w), rtol=0, atol=1e-12)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ffn_forward(np.ones((2, 5)), init_block_weights(SMALL, rng).ffn1)


class TestConvModule:
    def test_delta_kernel_passes_glu_output_through(self, rng, backend):
        d = 4
        cfg = replace(SMALL, d_model=d, heads=1)
        w = zero_block_weights(cfg)
        conv = w.conv
        conv.pw1 = np.hstack([np.eye(d), np.zeros((d, d))])  # value half identity, gate half zero
        conv.dw = np.zeros((3, d))
        conv.dw[1] = 1.0
        conv.pw2 = np.eye(d)
        x = rng.standard_normal((7, d))
        glu = 0.5 * layer_norm(x, np.ones(d), np.zeros(d))  # sigmoid(0) = 1/2
        np.testing.assert_allclose(conv_module_forward(x, conv), glu / (1 + np.exp(-glu)), rtol=0, atol=1e-14)

    def test_single_frame_uses_zero_padding(self, rng, backend):
        w = init_block_weights(SMALL, rng).conv
        x = rng.standard_normal((1, 16))
        out = conv_module_forward(x, w)
        assert out.shape == (1, 16)
        np.testing.assert_allclose(out, oracle_conv_module(x, w), atol=1e-12)

    def test_matches_sliding_window_oracle(self, rng, backend):
        cfg = replace(SMALL, d_model=4, heads=1)
        w = init_block_weights(cfg, rng).conv
        w.bn_scale, w.bn_shift = rng.uniform(0.5, 2, 4), rng.standard_normal(4)
        x = rng.standard_normal((6, 4))
        np.testing.assert_allclose(conv_module_forward(x, w), oracle_conv_module(x, w), rtol=0, atol=1e-12)


class TestBlock:
    def test_zero_weights_reduce_to_layer_norm(self, rng):
        x = rng.standard_normal((9, 16))
        out = conformer_block_forward(x, zero_block_weights(SMALL))
        np.testing.assert_allclose(out, layer_norm(x, np.ones(16), np.zeros(16)), rtol=0, atol=1e-14)

    @pytest.mark.parametrize("length", [1, 7, 64])
    def test_shape_preserved(self, rng, length):
        w = init_block_weights(SMALL, rng)
        assert conformer_block_forward(rng.standard_normal((length, 16)), w).shape == (length, 16)

    def test_full_rate_sparse_equals_dense(self, rng, backend):
        w = init_block_weights(SMALL, rng)
        x = rng.standard_normal((24, 16))
        sparse = conformer_block_forward(x, w, _sparse_fn(SparsityParams(1.0, 1.0), make_rng(2)))
        np.testing.assert_allclose(sparse, conformer_block_forward(x, w), rtol=0, atol=1e-8)


class TestEncoder:
    def test_zero_layers_is_identity(self, rng):
        cfg = replace(SMALL, num_layers=0)
        x = rng.standard_normal((5, 16))
        assert np.array_equal(encoder_forward(x, cfg, [], rng).values, x)

    @pytest.mark.parametrize("n_share,expected", [(1, 16), (2, 8), (4, 4), (8, 2), (16, 1)])
    def test_measurement_count(self, rng, n_share, expected):
        cfg = replace(SMALL, sparsity=SparsityParams(1.0, 0.5, n_share))
        res = encoder_forward(rng.standard_normal((12, 16)), cfg, init_encoder_weights(cfg, rng), rng)
        assert res.measurements_computed == expected
        assert all(s.measurements_computed == expected for s in res.share_states)
        assert len(res.share_states) == cfg.heads

    def test_share_state_resets_each_pass(self, rng):
        cfg = replace(SMALL, sparsity=SparsityParams(1.0, 0.5, 4))
        weights = init_encoder_weights(cfg, rng)
        x = rng.standard_normal((12, 16))
        encoder_forward(x, cfg, weights, rng)
        assert encoder_forward(x, cfg, weights, rng).measurements_computed == 4

    def test_dense_mode_has_no_share_state(self, rng):
        cfg = replace(SMALL, attn_mode="dense")
        res = encoder_forward(rng.standard_normal((3, 16)), cfg, init_encoder_weights(cfg, rng), rng)
        assert res.share_states == [] and res.measurements_computed == 0

    def test_full_rate_sparse_equals_dense_through_16_layers(self, rng, backend):
        dense = replace(SMALL, attn_mode="dense")
        sparse = replace(SMALL, sparsity=SparsityParams(1.0, 1.0, 4))
        weights = init_encoder_weights(dense, rng)
        x = rng.standard_normal((20, 16))
        a = encoder_forward(x, dense, weights, make_rng(1)).values
        b = encoder_forward(x, sparse, weights, make_rng(1)).values
        np.testing.assert_allclose(b, a, rtol=0, atol=1e-6)

    def test_outputs_stay_finite(self, rng):
        cfg = replace(DEFAULT, attn_mode="dense")
        x = rng.standard_normal((16, 256))
        weights = init_encoder_weights(cfg, rng)
        for w in weights:
            x = conformer_block_forward(x, w)
            assert np.isfinite(x).all()

    def test_missing_weights(self, rng):
        with pytest.raises(ConfigError):
            encoder_forward(rng.standard_normal((3, 16)), SMALL, [], rng)
