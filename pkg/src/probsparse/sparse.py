"""Prob-sparse self-attention.

Each query is scored by how far its attention distribution is from uniform.
Only the top-scoring queries get full attention; every other query outputs
its own value row unchanged. Scoring can be shared across consecutive
encoder layers through :class:`LayerShareState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .attention import AttnOutput, _check_qkv
from .numeric import (
    ConfigError,
    ContractError,
    NumericError,
    ShapeError,
    as_matrix,
    buffer,
    ceil_count,
    matmul,
    sample_without_replacement,
)

__all__ = [
    "SparsityParams",
    "SparsitySelection",
    "LayerShareState",
    "kl_from_uniform",
    "sparsity_measure_exact",
    "sparsity_measure_sampled",
    "select_queries",
    "attention_prob_sparse",
    "shared_select",
    "l_sparse_for",
    "l_tilde_for",
]


@dataclass(frozen=True)
class SparsityParams:
    r_sample: float = 1.0
    r_sparse: float = 0.5
    share_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.r_sparse <= 1.0:
            raise ConfigError(f"r_sparse must be in (0, 1], got {self.r_sparse}")
        if not self.r_sample > 0.0:
            raise ConfigError(f"r_sample must be positive, got {self.r_sample}")
        if int(self.share_every) != self.share_every or self.share_every < 1:
            raise ConfigError(f"share_every must be a positive integer, got {self.share_every}")


def l_sparse_for(length: int, r_sparse: float) -> int:
    """Number of queries kept: ``clamp(ceil(r_sparse * L), 1, L)``."""
    return ceil_count(r_sparse, length, length)


def l_tilde_for(length: int, r_sample: float) -> int:
    """Number of sampled keys: ``clamp(ceil(r_sample * ln L), 1, L)``."""
    return ceil_count(r_sample, math.log(length), length)


@dataclass
class SparsitySelection:
    scores: np.ndarray
    indices: np.ndarray
    l_sparse: int
    l_tilde: int

    def __eq__(self, other):
        if not isinstance(other, SparsitySelection):
            return NotImplemented
        return (
            self.l_sparse == other.l_sparse
            and self.l_tilde == other.l_tilde
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass
class LayerShareState:
    """Selection cache carried across the layers of one forward pass."""

    cached: Optional[SparsitySelection] = None
    layer_counter: int = 0
    measurements_computed: int = 0
    # one flag per layer seen: True where a fresh selection was computed
    history: list = field(default_factory=list)

    def reset(self) -> None:
        self.cached = None
        self.layer_counter = 0
        self.measurements_computed = 0
        self.history.clear()


def _scaled_scores(q_i, k):
    k = as_matrix(k, "k")
    q_i = np.asarray(q_i, dtype=np.float64).reshape(-1)
    if q_i.shape[0] != k.shape[1]:
        raise ShapeError(f"query length {q_i.shape[0]} != key dim {k.shape[1]}")
    s = (k @ q_i) / math.sqrt(q_i.shape[0])
    if not np.isfinite(s).all():
        raise NumericError("attention scores are not finite")
    return s


def sparsity_measure_exact(q_i, k) -> float:
    """Log-sum-exp of the scaled scores minus their mean."""
    s = _scaled_scores(q_i, k).reshape(1, -1)
    return float(kernels.lse_rows(s)[0] - kernels.mean_rows(s)[0])


def kl_from_uniform(q_i, k) -> float:
    """KL divergence of the query's attention distribution from uniform."""
    return sparsity_measure_exact(q_i, k) - math.log(as_matrix(k, "k").shape[0])


def sparsity_measure_sampled(q_i, k, sample_idx) -> float:
    """Max minus mean of the scaled scores over the sampled keys only."""
    sample_idx = np.asarray(sample_idx, dtype=np.int64).reshape(-1)
    if sample_idx.size == 0:
        raise ContractError("sparsity_measure_sampled needs a non-empty key sample")
    k = as_matrix(k, "k")
    if sample_idx.min() < 0 or sample_idx.max() >= k.shape[0]:
        raise ContractError(f"sample indices must lie in [0, {k.shape[0]})")
    if np.unique(sample_idx).size != sample_idx.size:
        raise ContractError("sample indices must be distinct")
    s = _scaled_scores(q_i, k[sample_idx])
    return float(kernels.max_minus_mean_rows(s.reshape(1, -1))[0])


def select_queries(q, k, params: SparsityParams, rng: np.random.Generator) -> SparsitySelection:
    """Score every query against one shared random key sample; keep the top ones.

    Ties go to the lower query index. ``indices`` comes back ascending.
    """
    q, k = as_matrix(q, "q"), as_matrix(k, "k")
    length = q.shape[0]
    if k.shape[0] != length:
        raise ShapeError(f"self-attention needs as many keys as queries, got {k.shape[0]} vs {length}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    l_tilde = l_tilde_for(length, params.r_sample)
    l_sparse = l_sparse_for(length, params.r_sparse)

    idx = sample_without_replacement(length, l_tilde, rng)
    k_sample = buffer((l_tilde, k.shape[1]), "sampling")
    np.take(k, idx, axis=0, out=k_sample)
    sampled = matmul(q, k_sample.T, tag="sampling")
    sampled *= 1.0 / math.sqrt(q.shape[1])
    if not np.isfinite(sampled).all():
        raise NumericError("sampled attention scores are not finite")
    scores = kernels.max_minus_mean_rows(sampled)
    indices = kernels.topk_sorted(scores, l_sparse)
    return SparsitySelection(scores=scores, indices=indices, l_sparse=l_sparse, l_tilde=l_tilde)


def attention_prob_sparse(q, k, v, sel: SparsitySelection, return_weights: bool = False) -> AttnOutput:
    """Full attention on the selected queries, value passthrough on the rest.

    Only an ``l_sparse x L`` score slab is materialised.
    """
    q, k, v = as_matrix(q, "q"), as_matrix(k, "k"), as_matrix(v, "v")
    _check_qkv(q, k, v)
    length = q.shape[0]
    if k.shape[0] != length:
        raise ShapeError(
            f"value passthrough needs square self-attention, got {length} queries and {k.shape[0]} keys"
        )
    idx = np.asarray(sel.indices, dtype=np.int64)
    if idx.shape[0] != sel.l_sparse or sel.l_sparse < 1:
        raise ContractError(f"selection has {idx.shape[0]} indices but l_sparse={sel.l_sparse}")
    if idx.min() < 0 or idx.max() >= length:
        raise ContractError(f"selection indices out of range for L={length}")
    if idx.shape[0] > 1 and not (np.diff(idx) > 0).all():
        raise ContractError("selection indices must be strictly ascending")

    if idx.shape[0] == length:
        q_sel = q
    else:
        q_sel = buffer((idx.shape[0], q.shape[1]))
        np.take(q, idx, axis=0, out=q_sel)
    scores = matmul(q_sel, k.T, tag="scores")
    kernels.softmax_rows_(scores, 1.0 / math.sqrt(q.shape[1]))
    rows = matmul(scores, v)

    out = buffer(v.shape)
    out[:] = v
    kernels.scatter_rows_(out, idx, rows)
    return AttnOutput(out, scores if return_weights else None)


def shared_select(q, k, params: SparsityParams, state: LayerShareState, rng) -> SparsitySelection:
    """Fresh selection on layers ``0, N, 2N, ...``; the cached one in between."""
    fresh = state.layer_counter % params.share_every == 0
    if fresh:
        state.cached = select_queries(q, k, params, rng)
        state.measurements_computed += 1
    elif state.cached is None:
        raise ContractError(
            f"layer {state.layer_counter} reuses a selection but none is cached"
        )
    elif state.cached.indices.shape[0] and state.cached.indices[-1] >= as_matrix(q).shape[0]:
        raise ContractError("cached selection does not fit the current sequence length")
    state.history.append(fresh)
    state.layer_counter += 1
    return state.cached
