"""Vanilla scaled dot-product attention and the multi-head wrapper.

``attention_dense`` is both the benchmark baseline and the dense branch that
prob-sparse attention falls back to on its selected rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .numeric import ConfigError, ShapeError, as_matrix, buffer, matmul

__all__ = [
    "ProjectionWeights",
    "AttnOutput",
    "project_qkv",
    "attention_dense",
    "attention_row",
    "multi_head_attention",
    "init_heads",
]


@dataclass(frozen=True)
class ProjectionWeights:
    """Per-head projections, each ``d_x x d``."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        shapes = {self.w_q.shape, self.w_k.shape, self.w_v.shape}
        if len(shapes) != 1:
            raise ShapeError(
                f"projection shapes differ: w_q {self.w_q.shape}, "
                f"w_k {self.w_k.shape}, w_v {self.w_v.shape}"
            )

    @property
    def d_in(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_head(self) -> int:
        return self.w_q.shape[1]


@dataclass
class AttnOutput:
    values: np.ndarray
    # only populated when the caller asks for introspection
    weights: Optional[np.ndarray] = None


def project_qkv(x, w: ProjectionWeights):
    x = as_matrix(x, "x")
    if x.shape[1] != w.d_in:
        raise ShapeError(f"x has {x.shape[1]} columns but projections expect {w.d_in}")
    return matmul(x, w.w_q), matmul(x, w.w_k), matmul(x, w.w_v)


def _check_qkv(q, k, v):
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"{k.shape[0]} keys but {v.shape[0]} values")


def attention_dense(q, k, v, return_weights: bool = False) -> AttnOutput:
    """``softmax(q k^T / sqrt(d)) v`` with the softmax taken over keys."""
    q, k, v = as_matrix(q, "q"), as_matrix(k, "k"), as_matrix(v, "v")
    _check_qkv(q, k, v)
    scores = matmul(q, k.T, tag="scores")
    kernels.softmax_rows_(scores, 1.0 / math.sqrt(q.shape[1]))
    out = matmul(scores, v)
    return AttnOutput(out, scores if return_weights else None)


def attention_row(q_i, k, v) -> np.ndarray:
    """Attention output for a single query vector."""
    k, v = as_matrix(k, "k"), as_matrix(v, "v")
    q_i = np.asarray(q_i, dtype=np.float64).reshape(-1)
    if q_i.shape[0] != k.shape[1]:
        raise ShapeError(f"query length {q_i.shape[0]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"{k.shape[0]} keys but {v.shape[0]} values")
    s = (k @ q_i) / math.sqrt(q_i.shape[0])
    p = np.exp(s - s.max())
    p /= p.sum()
    return p @ v


AttnFn = Callable[[np.ndarray, np.ndarray, np.ndarray], AttnOutput]


def multi_head_attention(
    x,
    heads: Sequence[ProjectionWeights],
    attn_fn: Union[AttnFn, Sequence[AttnFn]] = attention_dense,
    w_o: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Project, attend per head, concatenate on features, output-project.

    ``attn_fn`` is one callable shared by all heads or one per head (the
    prob-sparse encoder keeps per-head selection state in its callables).
    ``w_o`` is ``d_model x d_model``; when omitted the concatenation is
    returned as-is.
    """
    x = as_matrix(x, "x")
    n_heads = len(heads)
    if n_heads < 1:
        raise ConfigError("multi_head_attention needs at least one head")
    d_model = x.shape[1]
    if d_model % n_heads:
        raise ConfigError(f"d_model={d_model} is not divisible by {n_heads} heads")
    d_head = d_model // n_heads
    for h, w in enumerate(heads):
        if w.d_in != d_model or w.d_head != d_head:
            raise ConfigError(
                f"head {h} projects {w.d_in}->{w.d_head}, expected {d_model}->{d_head}"
            )
    fns = list(attn_fn) if isinstance(attn_fn, (list, tuple)) else [attn_fn] * n_heads
    if len(fns) != n_heads:
        raise ConfigError(f"{len(fns)} attention functions for {n_heads} heads")

    concat = buffer((x.shape[0], d_model))
    for h, (w, fn) in enumerate(zip(heads, fns)):
        q, k, v = project_qkv(x, w)
        concat[:, h * d_head:(h + 1) * d_head] = fn(q, k, v).values
    if w_o is None:
        return concat
    if w_o.shape != (d_model, d_model):
        raise ShapeError(f"w_o must be {d_model}x{d_model}, got {w_o.shape}")
    return matmul(concat, w_o)


def init_heads(d_model: int, n_heads: int, rng: np.random.Generator):
    """Unit-normal projections scaled by ``1/sqrt(d_model)``."""
    if d_model % n_heads:
        raise ConfigError(f"d_model={d_model} is not divisible by {n_heads} heads")
    d_head = d_model // n_heads
    scale = 1.0 / math.sqrt(d_model)
    return [
        ProjectionWeights(
            rng.standard_normal((d_model, d_head)) * scale,
            rng.standard_normal((d_model, d_head)) * scale,
            rng.standard_normal((d_model, d_head)) * scale,
        )
        for _ in range(n_heads)
    ]
