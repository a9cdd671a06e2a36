"""Conformer encoder blocks with pluggable self-attention.

Block chain, all sub-modules pre-normed::

    x = x + 0.5 * FFN1(x)
    x = x + MHSA(x)
    x = x + Conv(x)
    y = LayerNorm(x + 0.5 * FFN2(x))

The convolution module's batch norm is stored in its inference form as a
per-channel scale and shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .attention import ProjectionWeights, attention_dense, init_heads, multi_head_attention
from .numeric import ConfigError, ShapeError, as_matrix, buffer, matmul
from .sparse import LayerShareState, SparsityParams, attention_prob_sparse, shared_select

__all__ = [
    "FeedForwardWeights",
    "ConvWeights",
    "MHSAWeights",
    "ConformerBlockWeights",
    "EncoderConfig",
    "EncoderOutput",
    "layer_norm",
    "swish",
    "ffn_forward",
    "conv_module_forward",
    "mhsa_forward",
    "conformer_block_forward",
    "encoder_forward",
    "init_block_weights",
    "init_encoder_weights",
    "zero_block_weights",
]

LN_EPS = 1e-5


@dataclass
class FeedForwardWeights:
    ln_scale: np.ndarray
    ln_shift: np.ndarray
    w1: np.ndarray  # d_model x d_ff
    b1: np.ndarray
    w2: np.ndarray  # d_ff x d_model
    b2: np.ndarray


@dataclass
class ConvWeights:
    ln_scale: np.ndarray
    ln_shift: np.ndarray
    pw1: np.ndarray  # d_model x 2*d_model, feeds the GLU
    pw1_b: np.ndarray
    dw: np.ndarray  # kernel_size x d_model
    dw_b: np.ndarray
    bn_scale: np.ndarray
    bn_shift: np.ndarray
    pw2: np.ndarray  # d_model x d_model
    pw2_b: np.ndarray

    @property
    def kernel_size(self) -> int:
        return self.dw.shape[0]


@dataclass
class MHSAWeights:
    ln_scale: np.ndarray
    ln_shift: np.ndarray
    heads: List[ProjectionWeights]
    w_o: Optional[np.ndarray] = None


@dataclass
class ConformerBlockWeights:
    ffn1: FeedForwardWeights
    mhsa: MHSAWeights
    conv: ConvWeights
    ffn2: FeedForwardWeights
    ln_scale: np.ndarray
    ln_shift: np.ndarray


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 16
    d_model: int = 256
    heads: int = 4
    d_ff: int = 1024
    kernel_size: int = 3
    sparsity: SparsityParams = field(default_factory=lambda: SparsityParams(1.0, 0.5, 4))
    attn_mode: str = "prob-sparse"

    def __post_init__(self):
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.num_layers < 0:
            raise ConfigError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.attn_mode not in ("dense", "prob-sparse"):
            raise ConfigError(f"attn_mode must be 'dense' or 'prob-sparse', got {self.attn_mode!r}")


@dataclass
class EncoderOutput:
    values: np.ndarray
    # one state per attention head; empty in dense mode
    share_states: List[LayerShareState]

    @property
    def measurements_computed(self) -> int:
        """Layers that computed a fresh selection (identical across heads)."""
        return self.share_states[0].measurements_computed if self.share_states else 0


def layer_norm(x, scale, shift, eps: float = LN_EPS) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * scale + shift


def swish(x):
    return x / (1.0 + np.exp(-x))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_width(x, width, what):
    if x.shape[1] != width:
        raise ShapeError(f"{what} expects {width} features, got {x.shape[1]}")


def ffn_forward(x, w: FeedForwardWeights) -> np.ndarray:
    """LayerNorm -> linear -> swish -> linear."""
    x = as_matrix(x, "x")
    _check_width(x, w.w1.shape[0], "feed-forward module")
    h = matmul(layer_norm(x, w.ln_scale, w.ln_shift), w.w1)
    h += w.b1
    h = swish(h)
    out = matmul(h, w.w2)
    out += w.b2
    return out


def conv_module_forward(x, w: ConvWeights) -> np.ndarray:
    """LayerNorm -> pointwise + GLU -> depthwise (same padding) -> BN -> swish -> pointwise."""
    x = as_matrix(x, "x")
    d = w.pw2.shape[0]
    _check_width(x, d, "convolution module")
    h = matmul(layer_norm(x, w.ln_scale, w.ln_shift), w.pw1)
    h += w.pw1_b
    g = np.ascontiguousarray(h[:, :d] * _sigmoid(h[:, d:]))
    dw_out = buffer(g.shape)
    kernels.depthwise_conv_(dw_out, g, w.dw, w.dw_b)
    h = swish(dw_out * w.bn_scale + w.bn_shift)
    out = matmul(h, w.pw2)
    out += w.pw2_b
    return out


def mhsa_forward(x, w: MHSAWeights, attn_fn=attention_dense) -> np.ndarray:
    x = as_matrix(x, "x")
    return multi_head_attention(layer_norm(x, w.ln_scale, w.ln_shift), w.heads, attn_fn, w.w_o)


def conformer_block_forward(x, w: ConformerBlockWeights, attn_fn=attention_dense) -> np.ndarray:
    x = as_matrix(x, "x")
    x = x + 0.5 * ffn_forward(x, w.ffn1)
    x = x + mhsa_forward(x, w.mhsa, attn_fn)
    x = x + conv_module_forward(x, w.conv)
    return layer_norm(x + 0.5 * ffn_forward(x, w.ffn2), w.ln_scale, w.ln_shift)


def _sparse_head_fn(params, state, rng):
    def fn(q, k, v):
        return attention_prob_sparse(q, k, v, shared_select(q, k, params, state, rng))

    return fn


def encoder_forward(
    x, cfg: EncoderConfig, weights: List[ConformerBlockWeights], rng: np.random.Generator
) -> EncoderOutput:
    """Run ``cfg.num_layers`` blocks; sharing state starts fresh on every call."""
    x = as_matrix(x, "x")
    _check_width(x, cfg.d_model, "encoder")
    if len(weights) < cfg.num_layers:
        raise ConfigError(f"{cfg.num_layers} layers configured but {len(weights)} weight sets given")
    states: List[LayerShareState] = []
    if cfg.attn_mode == "prob-sparse":
        states = [LayerShareState() for _ in range(cfg.heads)]
        attn_fn = [_sparse_head_fn(cfg.sparsity, s, rng) for s in states]
    else:
        attn_fn = attention_dense
    for layer in range(cfg.num_layers):
        x = conformer_block_forward(x, weights[layer], attn_fn)
    return EncoderOutput(x, states)


def _ffn_weights(d_model, d_ff, rng):
    return FeedForwardWeights(
        ln_scale=np.ones(d_model),
        ln_shift=np.zeros(d_model),
        w1=rng.standard_normal((d_model, d_ff)) / math.sqrt(d_model),
        b1=0.1 * rng.standard_normal(d_ff),
        w2=rng.standard_normal((d_ff, d_model)) / math.sqrt(d_ff),
        b2=0.1 * rng.standard_normal(d_model),
    )


def init_block_weights(cfg: EncoderConfig, rng: np.random.Generator) -> ConformerBlockWeights:
    """Seeded random weights: unit normals scaled by ``1/sqrt(fan_in)``."""
    d, k = cfg.d_model, cfg.kernel_size
    ffn1 = _ffn_weights(d, cfg.d_ff, rng)
    mhsa = MHSAWeights(
        ln_scale=np.ones(d),
        ln_shift=np.zeros(d),
        heads=init_heads(d, cfg.heads, rng),
        w_o=rng.standard_normal((d, d)) / math.sqrt(d),
    )
    conv = ConvWeights(
        ln_scale=np.ones(d),
        ln_shift=np.zeros(d),
        pw1=rng.standard_normal((d, 2 * d)) / math.sqrt(d),
        pw1_b=0.1 * rng.standard_normal(2 * d),
        dw=rng.standard_normal((k, d)) / math.sqrt(k),
        dw_b=0.1 * rng.standard_normal(d),
        bn_scale=np.ones(d),
        bn_shift=np.zeros(d),
        pw2=rng.standard_normal((d, d)) / math.sqrt(d),
        pw2_b=0.1 * rng.standard_normal(d),
    )
    ffn2 = _ffn_weights(d, cfg.d_ff, rng)
    return ConformerBlockWeights(ffn1, mhsa, conv, ffn2, np.ones(d), np.zeros(d))


def init_encoder_weights(cfg: EncoderConfig, rng: np.random.Generator) -> List[ConformerBlockWeights]:
    return [init_block_weights(cfg, rng) for _ in range(cfg.num_layers)]


def zero_block_weights(cfg: EncoderConfig) -> ConformerBlockWeights:
    """All projections and biases zero, norms pass-through (scale 1, shift 0)."""
    d, f, k, dh = cfg.d_model, cfg.d_ff, cfg.kernel_size, cfg.d_model // cfg.heads
    zf = lambda: FeedForwardWeights(np.ones(d), np.zeros(d), np.zeros((d, f)), np.zeros(f), np.zeros((f, d)), np.zeros(d))  # noqa: E731
    heads = [ProjectionWeights(np.zeros((d, dh)), np.zeros((d, dh)), np.zeros((d, dh))) for _ in range(cfg.heads)]
    conv = ConvWeights(
        np.ones(d), np.zeros(d), np.zeros((d, 2 * d)), np.zeros(2 * d), np.zeros((k, d)), np.zeros(d),
        np.ones(d), np.zeros(d), np.zeros((d, d)), np.zeros(d),
    )
    return ConformerBlockWeights(
        zf(), MHSAWeights(np.ones(d), np.zeros(d), heads, np.zeros((d, d))), conv, zf(), np.ones(d), np.zeros(d)
    )
