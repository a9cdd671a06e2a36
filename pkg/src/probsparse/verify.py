"""Randomised property suite: library vs brute-force oracles and invariants.

Each property draws a fresh instance from ``make_rng([seed, index])`` so any
failure can be replayed from the printed pair. A check returns ``None`` on
success or a short description of what went wrong.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import kernels
from .attention import attention_dense, attention_row, init_heads, multi_head_attention
from .conformer import (
    EncoderConfig,
    conformer_block_forward,
    conv_module_forward,
    encoder_forward,
    ffn_forward,
    init_block_weights,
    init_encoder_weights,
)
from .numeric import (
    AllocMeter,
    log_sum_exp,
    make_rng,
    matmul,
    randn_matrix,
    row_softmax,
    sample_without_replacement,
)
from .oracle import (
    oracle_attention,
    oracle_conv_module,
    oracle_ffn,
    oracle_kl,
    oracle_kl_reverse,
    oracle_matmul,
    oracle_max_minus_mean,
    oracle_topk,
)
from .sparse import (
    LayerShareState,
    SparsityParams,
    attention_prob_sparse,
    kl_from_uniform,
    select_queries,
    shared_select,
    sparsity_measure_exact,
    sparsity_measure_sampled,
)

Check = Callable[[np.random.Generator], Optional[str]]


@dataclass
class Property:
    name: str
    module: str
    check: Check
    # expensive checks run on at most this many instances
    max_instances: Optional[int] = None


@dataclass
class PropertyResult:
    name: str
    module: str
    instances: int
    failures: int = 0
    first_failure: Optional[str] = None
    replay: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class VerifyReport:
    seed: int
    results: List[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def render(self) -> str:
        width = max(len(r.name) for r in self.results)
        lines = [f"verify suite, seed={self.seed}, kernel backend={kernels.get_backend()}"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            line = f"  {status}  {r.name:<{width}}  [{r.module}]  {r.instances} instances"
            if not r.passed:
                line += f", {r.failures} failed; first at seed={list(r.replay)}: {r.first_failure}"
            lines.append(line)
        n_fail = sum(not r.passed for r in self.results)
        lines.append(f"{len(self.results) - n_fail}/{len(self.results)} properties passed")
        return "\n".join(lines)


def _dims(rng, max_l, max_d):
    return int(rng.integers(1, max_l + 1)), int(rng.integers(1, max_d + 1))


def _qkv(rng, length, d, scale=1.0):
    return tuple(rng.standard_normal((length, d)) * scale for _ in range(3))


def _maxerr(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# numeric core ---------------------------------------------------------------

def check_matmul(rng):
    n, m = _dims(rng, 12, 12)
    p = int(rng.integers(1, 13))
    a, b = rng.standard_normal((n, m)), rng.standard_normal((m, p))
    if not np.array_equal(matmul(a, np.eye(m)), a):
        return "a @ I != a"
    err = _maxerr(matmul(a, b), oracle_matmul(a, b))
    if err > 1e-12 * max(1, m):
        return f"matmul off by {err:.3e} from loop product"
    return None


def check_softmax(rng):
    n, c = _dims(rng, 8, 64)
    m = rng.uniform(-1e4, 1e4, (n, c))
    p = row_softmax(m)
    if (p < 0).any():
        return "negative probability"
    err = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    return None if err <= 1e-12 else f"row sums off by {err:.3e}"


def check_lse_bounds(rng):
    v = rng.standard_normal(int(rng.integers(1, 100))) * rng.choice([1.0, 10.0, 1000.0])
    lse = log_sum_exp(v)
    if not (v.max() <= lse <= v.max() + math.log(v.size)):
        return f"lse={lse!r} outside [max, max + ln n]"
    return None


def check_lse_shift(rng):
    v = rng.standard_normal(int(rng.integers(1, 100))) * 10.0
    c = float(rng.uniform(-100, 100))
    err = abs(log_sum_exp(v + c) - (log_sum_exp(v) + c))
    return None if err <= 1e-10 else f"shift equivariance off by {err:.3e}"


def check_rng_determinism(rng):
    seed = int(rng.integers(0, 2**63))
    a = randn_matrix(3, 5, make_rng(seed))
    b = randn_matrix(3, 5, make_rng(seed))
    n = int(rng.integers(1, 200))
    k = int(rng.integers(1, n + 1))
    s1 = sample_without_replacement(n, k, make_rng(seed))
    s2 = sample_without_replacement(n, k, make_rng(seed))
    if not np.array_equal(a, b) or not np.array_equal(s1, s2):
        return "same seed gave different streams"
    if len(set(s1.tolist())) != k or (np.diff(s1) <= 0).any() or s1.min() < 0 or s1.max() >= n:
        return "sample not distinct, ascending and in range"
    return None


# attention core -------------------------------------------------------------

def check_dense_vs_oracle(rng):
    length, d = _dims(rng, 64, 16)
    q, k, v = _qkv(rng, length, d)
    err = _maxerr(attention_dense(q, k, v).values, oracle_attention(q, k, v))
    return None if err <= 1e-10 else f"dense vs loop oracle {err:.3e} (L={length}, d={d})"


def check_dense_vs_rows(rng):
    length, d = _dims(rng, 64, 16)
    q, k, v = _qkv(rng, length, d)
    stacked = np.stack([attention_row(q[i], k, v) for i in range(length)])
    err = _maxerr(attention_dense(q, k, v).values, stacked)
    return None if err <= 1e-10 else f"matrix vs vector form {err:.3e}"


def check_row_convexity(rng):
    length, d = _dims(rng, 64, 16)
    q, k, v = _qkv(rng, length, d, scale=3.0)
    out = attention_dense(q, k, v).values
    tol = 1e-12 * max(1.0, float(np.abs(v).max()))
    if (out < v.min(axis=0) - tol).any() or (out > v.max(axis=0) + tol).any():
        return "output outside the per-column range of v"
    return None


def check_key_permutation(rng):
    length, d = _dims(rng, 64, 16)
    q, k, v = _qkv(rng, length, d)
    perm = rng.permutation(length)
    err = _maxerr(attention_dense(q, k, v).values, attention_dense(q, k[perm], v[perm]).values)
    return None if err <= 1e-12 else f"key/value permutation changed output by {err:.3e}"


def check_score_scaling(rng):
    length, d = _dims(rng, 32, 16)
    q, k, v = _qkv(rng, length, d)
    s = float(rng.uniform(0.1, 4.0))
    scaled = attention_dense(q * math.sqrt(s), k * math.sqrt(s), v).values
    raw = s * (q @ k.T) / math.sqrt(d)
    p = np.exp(raw - raw.max(axis=1, keepdims=True))
    ref = (p / p.sum(axis=1, keepdims=True)) @ v
    err = _maxerr(scaled, ref)
    return None if err <= 1e-10 else f"sqrt(s) scaling vs s-scaled scores {err:.3e}"


def check_mha_sparse_full(rng):
    length = int(rng.integers(1, 33))
    d_model = 2 * int(rng.integers(1, 9))
    x = rng.standard_normal((length, d_model))
    heads = init_heads(d_model, 2, rng)
    params = SparsityParams(1.0, 1.0, 1)
    sub = make_rng(int(rng.integers(0, 2**32)))

    def sparse_fn(q, k, v):
        return attention_prob_sparse(q, k, v, select_queries(q, k, params, sub))

    err = _maxerr(multi_head_attention(x, heads, attention_dense), multi_head_attention(x, heads, sparse_fn))
    return None if err <= 1e-9 else f"2-head sparse(r=1) vs dense {err:.3e}"


# prob-sparse ----------------------------------------------------------------

def check_kl_oracle(rng):
    length, d = _dims(rng, 64, 16)
    q_i, k = rng.standard_normal(d) * rng.choice([0.5, 1.0, 3.0]), rng.standard_normal((length, d))
    exact = sparsity_measure_exact(q_i, k)
    ln_l = math.log(length)
    err = abs(exact - ln_l - oracle_kl_reverse(q_i, k))
    if err > 1e-9:
        return f"M - ln L vs explicit KL(U||P) {err:.3e}"
    if oracle_kl(q_i, k) < -1e-12:
        return "explicit KL(P||U) negative"
    if abs(kl_from_uniform(q_i, k) - (exact - ln_l)) > 1e-10:
        return "kl_from_uniform != M - ln L"
    if exact < ln_l - 1e-10:
        return f"Jensen bound violated: M={exact!r} < ln L={ln_l!r}"
    return None


def check_sampling_sandwich(rng):
    length, d = _dims(rng, 64, 16)
    q_i, k = rng.standard_normal(d) * rng.choice([0.5, 1.0, 3.0]), rng.standard_normal((length, d))
    gap = sparsity_measure_exact(q_i, k) - sparsity_measure_sampled(q_i, k, np.arange(length))
    if not 0.0 <= gap <= math.log(length):
        return f"exact - sampled = {gap!r} outside [0, ln {length}]"
    return None


def check_sampled_vs_oracle(rng):
    length, d = _dims(rng, 64, 16)
    q_i, k = rng.standard_normal(d), rng.standard_normal((length, d))
    idx = sample_without_replacement(length, int(rng.integers(1, length + 1)), rng)
    err = abs(sparsity_measure_sampled(q_i, k, idx) - oracle_max_minus_mean(q_i, k[idx]))
    return None if err <= 1e-10 else f"sampled measure vs loop oracle {err:.3e}"


def check_topk_ties(rng):
    n = int(rng.integers(1, 40))
    scores = rng.integers(0, 4, n).astype(float)
    k = int(rng.integers(1, n + 1))
    got = kernels.topk_sorted(scores, k).tolist()
    want = oracle_topk(scores, k)
    return None if got == want else f"top-{k} of {scores.tolist()}: got {got}, want {want}"


def check_select_exhaustive(rng):
    length, d = _dims(rng, 48, 8)
    q, k, _ = _qkv(rng, length, d)
    params = SparsityParams(r_sample=1e6, r_sparse=float(rng.uniform(0.05, 1.0)))
    sel = select_queries(q, k, params, rng)
    if sel.l_tilde != length:
        return f"expected full sampling, got l_tilde={sel.l_tilde}"
    ref_scores = [oracle_max_minus_mean(q[i], k) for i in range(length)]
    err = _maxerr(sel.scores, ref_scores)
    if err > 1e-10:
        return f"selection scores vs oracle {err:.3e}"
    want = oracle_topk(sel.scores, sel.l_sparse)
    if sel.indices.tolist() != want:
        return f"indices {sel.indices.tolist()} != exhaustive top-{sel.l_sparse} {want}"
    return None


def check_select_determinism(rng):
    length, d = _dims(rng, 64, 16)
    q, k, _ = _qkv(rng, length, d)
    params = SparsityParams(float(rng.uniform(0.5, 5)), float(rng.uniform(0.05, 1.0)))
    seed = int(rng.integers(0, 2**63))
    a = select_queries(q, k, params, make_rng(seed))
    b = select_queries(q, k, params, make_rng(seed))
    if a != b:
        return "same seed produced different selections"
    if sel_err := _selection_invariants(a, length, params):
        return sel_err
    return None


def _selection_invariants(sel, length, params):
    from .sparse import l_sparse_for, l_tilde_for

    idx = sel.indices
    if len(idx) != sel.l_sparse or sel.l_sparse != l_sparse_for(length, params.r_sparse):
        return "l_sparse inconsistent"
    if sel.l_tilde != l_tilde_for(length, params.r_sample):
        return "l_tilde inconsistent"
    if (np.diff(idx) <= 0).any() or idx.min() < 0 or idx.max() >= length:
        return "indices not ascending, distinct and in range"
    return None


def check_passthrough_exact(rng):
    length, d = _dims(rng, 128, 32)
    q, k, v = _qkv(rng, length, d)
    sel = select_queries(q, k, SparsityParams(1.0, 0.5), rng)
    out = attention_prob_sparse(q, k, v, sel).values
    mask = np.ones(length, dtype=bool)
    mask[sel.indices] = False
    if not np.array_equal(out[mask], v[mask]):
        return "an unselected row differs from its value row"
    return None


def check_full_selection(rng):
    length, d = _dims(rng, 256, 32)
    q, k, v = _qkv(rng, length, d)
    sel = select_queries(q, k, SparsityParams(1.0, 1.0), rng)
    err = _maxerr(attention_prob_sparse(q, k, v, sel).values, attention_dense(q, k, v).values)
    return None if err <= 1e-9 else f"full selection vs dense {err:.3e} (L={length}, d={d})"


def check_selected_rows(rng):
    length, d = _dims(rng, 64, 8)
    q, k, v = _qkv(rng, length, d)
    sel = select_queries(q, k, SparsityParams(1.0, 0.5), rng)
    out = attention_prob_sparse(q, k, v, sel).values
    err = _maxerr(out[sel.indices], attention_dense(q, k, v).values[sel.indices])
    return None if err <= 1e-10 else f"selected rows vs dense {err:.3e}"


def check_share_counter(rng):
    n_share = int(rng.choice([1, 2, 4, 8, 16]))
    layers = 16
    params = SparsityParams(1.0, 0.5, n_share)
    state = LayerShareState()
    length, d = _dims(rng, 24, 4)
    seen = []
    for _ in range(layers):
        q, k, _ = _qkv(rng, length, d)
        seen.append(shared_select(q, k, params, state, rng).indices)
    if state.measurements_computed != layers // n_share:
        return f"N_share={n_share}: {state.measurements_computed} measurements, want {layers // n_share}"
    for start in range(0, layers, n_share):
        if any(not np.array_equal(seen[start], s) for s in seen[start:start + n_share]):
            return f"window starting at layer {start} used differing index sets"
    return None


def check_memory_bound(rng):
    length = int(rng.integers(16, 257))
    d = int(rng.integers(1, 33))
    q, k, v = _qkv(rng, length, d)
    params = SparsityParams(float(rng.uniform(0.5, 3)), float(rng.uniform(0.1, 1.0)))
    with AllocMeter() as dense:
        attention_dense(q, k, v)
    with AllocMeter() as sparse:
        attention_prob_sparse(q, k, v, select_queries(q, k, params, rng))
    bound = params.r_sparse * dense.by_tag["scores"] + sparse.by_tag["sampling"]
    used = sparse.by_tag["scores"] + sparse.by_tag["sampling"]
    # ceil() on L_sparse can add at most one extra score row
    if used > bound + 8 * length:
        return f"sparse score bytes {used} exceed r_sparse*dense + sampling = {bound}"
    return None


# conformer ------------------------------------------------------------------

def _small_cfg(rng, **kw):
    heads = int(rng.choice([1, 2, 4]))
    return EncoderConfig(
        d_model=heads * int(rng.integers(1, 5)), heads=heads, d_ff=int(rng.integers(1, 17)),
        kernel_size=int(rng.choice([1, 3, 5])), **kw,
    )


def check_ffn_oracle(rng):
    cfg = _small_cfg(rng)
    w = init_block_weights(cfg, rng).ffn1
    x = rng.standard_normal((int(rng.integers(1, 9)), cfg.d_model))
    err = _maxerr(ffn_forward(x, w), oracle_ffn(x, w))
    return None if err <= 1e-10 else f"ffn vs loop oracle {err:.3e}"


def check_conv_oracle(rng):
    cfg = _small_cfg(rng)
    w = init_block_weights(cfg, rng).conv
    w.bn_scale = rng.uniform(0.5, 2.0, cfg.d_model)
    w.bn_shift = rng.standard_normal(cfg.d_model)
    x = rng.standard_normal((int(rng.integers(1, 9)), cfg.d_model))
    err = _maxerr(conv_module_forward(x, w), oracle_conv_module(x, w))
    return None if err <= 1e-10 else f"conv module vs sliding-window oracle {err:.3e}"


def check_block_equivalence(rng):
    cfg = _small_cfg(rng)
    w = init_block_weights(cfg, rng)
    x = rng.standard_normal((int(rng.integers(1, 33)), cfg.d_model))
    params = SparsityParams(1.0, 1.0)
    sub = make_rng(int(rng.integers(0, 2**32)))

    def sparse_fn(q, k, v):
        return attention_prob_sparse(q, k, v, select_queries(q, k, params, sub))

    err = _maxerr(conformer_block_forward(x, w), conformer_block_forward(x, w, sparse_fn))
    return None if err <= 1e-8 else f"block dense vs sparse(r=1) {err:.3e}"


def check_encoder_equivalence(rng):
    base = _small_cfg(rng, num_layers=16)
    dense = replace(base, attn_mode="dense")
    sparse = replace(base, sparsity=SparsityParams(1.0, 1.0, 4))
    weights = init_encoder_weights(dense, rng)
    x = rng.standard_normal((int(rng.integers(1, 33)), base.d_model))
    a = encoder_forward(x, dense, weights, rng).values
    res = encoder_forward(x, sparse, weights, rng)
    if not np.isfinite(a).all():
        return "non-finite encoder output"
    if res.measurements_computed != 4:
        return f"{res.measurements_computed} fresh measurements over 16 layers with N_share=4"
    err = _maxerr(a, res.values)
    return None if err <= 1e-6 else f"16-layer dense vs sparse(r=1) {err:.3e}"


PROPERTIES: List[Property] = [
    Property("matmul_identity_and_loop_oracle", "numeric-core", check_matmul),
    Property("softmax_rows_sum_to_one", "numeric-core", check_softmax),
    Property("log_sum_exp_bounds", "numeric-core", check_lse_bounds),
    Property("log_sum_exp_shift_equivariance", "numeric-core", check_lse_shift),
    Property("seeded_rng_reproducible", "numeric-core", check_rng_determinism),
    Property("dense_matches_loop_oracle", "attention-core", check_dense_vs_oracle),
    Property("dense_matches_row_form", "attention-core", check_dense_vs_rows),
    Property("dense_row_convexity", "attention-core", check_row_convexity),
    Property("dense_key_permutation_invariant", "attention-core", check_key_permutation),
    Property("dense_score_scaling", "attention-core", check_score_scaling),
    Property("mha_sparse_full_equals_dense", "attention-core", check_mha_sparse_full),
    Property("kl_identity_and_jensen_bound", "prob-sparse", check_kl_oracle),
    Property("full_sampling_sandwich", "prob-sparse", check_sampling_sandwich),
    Property("sampled_measure_loop_oracle", "prob-sparse", check_sampled_vs_oracle),
    Property("topk_tie_break_low_index", "prob-sparse", check_topk_ties),
    Property("select_matches_exhaustive_topk", "prob-sparse", check_select_exhaustive),
    Property("select_deterministic", "prob-sparse", check_select_determinism),
    Property("passthrough_bit_exact", "prob-sparse", check_passthrough_exact),
    Property("full_selection_equals_dense", "prob-sparse", check_full_selection),
    Property("selected_rows_equal_dense", "prob-sparse", check_selected_rows),
    Property("share_counter_and_windows", "prob-sparse", check_share_counter),
    Property("score_bytes_bound", "prob-sparse", check_memory_bound),
    Property("ffn_loop_oracle", "conformer-encoder", check_ffn_oracle, max_instances=200),
    Property("conv_module_loop_oracle", "conformer-encoder", check_conv_oracle, max_instances=200),
    Property("block_sparse_full_equals_dense", "conformer-encoder", check_block_equivalence, max_instances=200),
    Property("encoder_16_layer_equivalence", "conformer-encoder", check_encoder_equivalence, max_instances=20),
]


def run_property(prop: Property, seed: int, instances: int) -> PropertyResult:
    n = instances if prop.max_instances is None else min(instances, prop.max_instances)
    result = PropertyResult(prop.name, prop.module, n)
    for i in range(n):
        try:
            msg = prop.check(make_rng([seed, i]))
        except Exception as exc:  # a crash is a failed instance, not a crashed suite
            msg = f"{type(exc).__name__}: {exc}"
        if msg is not None:
            result.failures += 1
            if result.first_failure is None:
                result.first_failure, result.replay = msg, (seed, i)
    return result


def verify_suite(seed: int = 0, instances: int = 1000, properties=None, quiet: bool = False) -> VerifyReport:
    report = VerifyReport(seed)
    for prop in properties or PROPERTIES:
        report.results.append(run_property(prop, seed, instances))
    if not quiet:
        print(report.render(), file=sys.stdout)
    return report


def replay(name: str, seed: int, index: int) -> Optional[str]:
    """Re-run one property on one instance."""
    prop = next(p for p in PROPERTIES if p.name == name)
    return prop.check(make_rng([seed, index]))
