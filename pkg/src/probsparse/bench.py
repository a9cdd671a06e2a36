"""Dense vs prob-sparse benchmark sweep.

Times the multi-head self-attention module (projections included) or the
full Conformer encoder across sequence lengths, single-threaded, and counts
transient bytes with :class:`~probsparse.numeric.AllocMeter`. Results are
written as CSV plus a markdown summary.
"""

from __future__ import annotations

import csv
import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import attention_dense, init_heads, multi_head_attention
from .conformer import EncoderConfig, encoder_forward, init_encoder_weights
from .numeric import AllocMeter, make_rng
from .sparse import SparsityParams, attention_prob_sparse, select_queries

log = logging.getLogger(__name__)

CSV_HEADER = (
    "mode,scope,seq_len,trial,wall_time_ns,transient_bytes,r_sparse,r_sample,n_share,seed"
)
MODES = ("dense", "prob-sparse")
SCOPES = ("attention-module", "encoder")
WARMUP_RUNS = 2

# speed-up and memory-reduction bands reported for the self-attention module
REFERENCE_SPEEDUP_BAND = (0.08, 0.45)
REFERENCE_MEMORY_BAND = (0.15, 0.45)


@dataclass(frozen=True)
class BenchConfig:
    modes: Sequence[str] = MODES
    scope: str = "attention-module"
    seq_lens: Sequence[int] = (512, 1024, 2048, 4096)
    d_model: int = 256
    heads: int = 4
    layers: int = 16
    r_sparse: float = 0.5
    r_sample: float = 1.0
    n_share: int = 4
    trials: int = 5
    seed: int = 0
    warmup: int = WARMUP_RUNS

    @property
    def params(self) -> SparsityParams:
        return SparsityParams(self.r_sample, self.r_sparse, self.n_share)


@dataclass
class BenchRecord:
    mode: str
    scope: str
    seq_len: int
    trial: int
    wall_time_ns: int
    transient_bytes: int
    r_sparse: float
    r_sample: float
    n_share: int
    seed: int

    def csv_row(self):
        return [
            self.mode, self.scope, self.seq_len, self.trial, self.wall_time_ns,
            self.transient_bytes, self.r_sparse, self.r_sample, self.n_share, self.seed,
        ]


@dataclass
class LengthSummary:
    seq_len: int
    median_ns: Dict[str, float] = field(default_factory=dict)
    median_bytes: Dict[str, float] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(m in self.median_ns for m in MODES)

    @property
    def speedup_ratio(self) -> Optional[float]:
        """dense time / sparse time."""
        if not self.complete:
            return None
        return self.median_ns["dense"] / self.median_ns["prob-sparse"]

    @property
    def memory_reduction(self) -> Optional[float]:
        """1 - sparse bytes / dense bytes."""
        if not self.complete:
            return None
        return 1.0 - self.median_bytes["prob-sparse"] / self.median_bytes["dense"]


class _AttentionModule:
    def __init__(self, cfg: BenchConfig):
        self.cfg = cfg
        self.heads = init_heads(cfg.d_model, cfg.heads, make_rng([cfg.seed, 1]))

    def runner(self, mode, x, rng):
        if mode == "dense":
            return lambda: multi_head_attention(x, self.heads, attention_dense)
        params = self.cfg.params

        def sparse_fn(q, k, v):
            return attention_prob_sparse(q, k, v, select_queries(q, k, params, rng))

        return lambda: multi_head_attention(x, self.heads, sparse_fn)


class _Encoder:
    def __init__(self, cfg: BenchConfig):
        self.cfg = cfg
        self.enc = {
            mode: EncoderConfig(
                num_layers=cfg.layers, d_model=cfg.d_model, heads=cfg.heads,
                sparsity=cfg.params, attn_mode=mode,
            )
            for mode in MODES
        }
        self.weights = init_encoder_weights(self.enc["dense"], make_rng([cfg.seed, 1]))

    def runner(self, mode, x, rng):
        return lambda: encoder_forward(x, self.enc[mode], self.weights, rng)


def _measure(fn):
    with AllocMeter() as meter:
        start = time.perf_counter_ns()
        fn()
        elapsed = time.perf_counter_ns() - start
    return max(elapsed, 1), meter.transient_bytes


def run_bench(cfg: BenchConfig) -> List[BenchRecord]:
    """Run the sweep; inputs are seeded per (seq_len, trial) and shared by both modes."""
    model = _Encoder(cfg) if cfg.scope == "encoder" else _AttentionModule(cfg)
    records = []
    with threadpool_limits(limits=1):
        for seq_len in cfg.seq_lens:
            warm_x = make_rng([cfg.seed, 2, seq_len]).standard_normal((seq_len, cfg.d_model))
            for mode in cfg.modes:
                for _ in range(cfg.warmup):
                    model.runner(mode, warm_x, make_rng([cfg.seed, 3, seq_len]))()
            for trial in range(cfg.trials):
                x = make_rng([cfg.seed, 4, seq_len, trial]).standard_normal((seq_len, cfg.d_model))
                # alternate which mode runs first so drift does not favour one side
                order = list(cfg.modes) if trial % 2 == 0 else list(reversed(cfg.modes))
                for mode in order:
                    run = model.runner(mode, x, make_rng([cfg.seed, 5, seq_len, trial]))
                    wall, nbytes = _measure(run)
                    records.append(BenchRecord(
                        mode, cfg.scope, seq_len, trial, wall, nbytes,
                        cfg.r_sparse, cfg.r_sample, cfg.n_share, cfg.seed,
                    ))
                    log.debug("%s L=%d trial=%d: %.3f ms, %d bytes", mode, seq_len, trial, wall / 1e6, nbytes)
    mode_rank = {m: i for i, m in enumerate(MODES)}
    records.sort(key=lambda r: (cfg.seq_lens.index(r.seq_len), mode_rank[r.mode], r.trial))
    return records


def summarize(records: Sequence[BenchRecord]) -> Dict[str, List[LengthSummary]]:
    """Median time and bytes per (scope, seq_len, mode)."""
    groups: Dict[tuple, List[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.scope, r.seq_len, r.mode), []).append(r)
    out: Dict[str, Dict[int, LengthSummary]] = {}
    for (scope, seq_len, mode), rs in groups.items():
        s = out.setdefault(scope, {}).setdefault(seq_len, LengthSummary(seq_len))
        s.median_ns[mode] = statistics.median(r.wall_time_ns for r in rs)
        s.median_bytes[mode] = statistics.median(r.transient_bytes for r in rs)
    return {scope: [by_len[k] for k in sorted(by_len)] for scope, by_len in out.items()}


def write_csv(records: Sequence[BenchRecord], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n", quoting=csv.QUOTE_NONE)
        for r in records:
            writer.writerow(r.csv_row())


def _fmt_ms(ns):
    return "-" if ns is None else f"{ns / 1e6:.2f} ms"


def _fmt_pct(x):
    return "-" if x is None else f"{100.0 * x:.1f}%"


def render_report(summary: Dict[str, List[LengthSummary]], cfg: Optional[BenchConfig] = None) -> str:
    lines = ["# Dense vs prob-sparse self-attention", ""]
    if cfg is not None:
        lines += [
            f"r_sparse={cfg.r_sparse}, r_sample={cfg.r_sample}, n_share={cfg.n_share}, "
            f"d_model={cfg.d_model}, heads={cfg.heads}, trials={cfg.trials} "
            f"(median, {cfg.warmup} warm-up runs discarded), seed={cfg.seed}, single thread.",
            "",
        ]
    for scope, rows in summary.items():
        lines += [
            f"## {scope}",
            "",
            "| seq_len | dense median | sparse median | speedup % | memory reduction % |",
            "|---:|---:|---:|---:|---:|",
        ]
        for s in rows:
            ratio = s.speedup_ratio
            speedup = None if ratio is None else ratio - 1.0
            lines.append(
                f"| {s.seq_len} | {_fmt_ms(s.median_ns.get('dense'))} | "
                f"{_fmt_ms(s.median_ns.get('prob-sparse'))} | {_fmt_pct(speedup)} | "
                f"{_fmt_pct(s.memory_reduction)} |"
            )
        lines.append("")
    lo_s, hi_s = REFERENCE_SPEEDUP_BAND
    lo_m, hi_m = REFERENCE_MEMORY_BAND
    lines += [
        f"Reference band for the self-attention module: {lo_s:.0%} to {hi_s:.0%} inference speed-up, "
        f"{lo_m:.0%} to {hi_m:.0%} memory usage reduction. Shown for comparison only; absolute "
        "ratios depend on hardware and on how memory is counted (cumulative transient bytes here).",
        "",
        "speedup % is dense_time / sparse_time - 1; memory reduction % is 1 - sparse_bytes / dense_bytes.",
        "",
    ]
    return "\n".join(lines)


def write_report(summary, path, cfg: Optional[BenchConfig] = None) -> None:
    with open(path, "w") as f:
        f.write(render_report(summary, cfg))


def median_ratio(records: Sequence[BenchRecord], seq_len: int) -> float:
    """Median sparse wall time divided by median dense wall time at ``seq_len``."""
    med = {
        m: np.median([r.wall_time_ns for r in records if r.seq_len == seq_len and r.mode == m])
        for m in MODES
    }
    return float(med["prob-sparse"] / med["dense"])
