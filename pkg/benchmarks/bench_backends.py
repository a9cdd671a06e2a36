#!/usr/bin/env python3
"""Numba vs pure-numpy kernel backends.

Times each hot kernel on both backends, then the full single-head dense and
prob-sparse attention with each backend active. Single-threaded; JIT
compilation happens during warm-up and is not timed.

    python benchmarks/bench_backends.py --seq-len 2048 --runs 7
"""

import argparse
import json
import statistics
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from probsparse import kernels
from probsparse.attention import attention_dense
from probsparse.numeric import make_rng
from probsparse.sparse import SparsityParams, attention_prob_sparse, select_queries

WARMUP_RUNS = 2


def timeit(fn, runs):
    for _ in range(WARMUP_RUNS):
        fn()
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def kernel_cases(seq_len, d, rng):
    scores = rng.standard_normal((seq_len, seq_len))
    sampled = rng.standard_normal((seq_len, max(1, int(np.ceil(np.log(seq_len))))))
    measure = rng.standard_normal(seq_len)
    v = rng.standard_normal((seq_len, d))
    idx = np.sort(rng.choice(seq_len, seq_len // 2, replace=False)).astype(np.int64)
    rows = rng.standard_normal((idx.size, d))
    conv_x = rng.standard_normal((seq_len, 256))
    conv_k = rng.standard_normal((3, 256))
    conv_b = rng.standard_normal(256)
    conv_out = np.empty_like(conv_x)

    def softmax(mod):
        buf = scores.copy()
        return lambda: mod.softmax_rows_(buf, 0.125)

    return {
        "softmax_rows_ (L x L)": softmax,
        "lse_rows (L x L)": lambda mod: lambda: mod.lse_rows(scores),
        "max_minus_mean_rows (L x ln L)": lambda mod: lambda: mod.max_minus_mean_rows(sampled),
        "topk_sorted (L/2 of L)": lambda mod: lambda: mod.topk_sorted(measure, seq_len // 2),
        "scatter_rows_ (L/2 rows)": lambda mod: lambda: mod.scatter_rows_(v.copy(), idx, rows),
        "depthwise_conv_ (L x 256, k=3)": lambda mod: lambda: mod.depthwise_conv_(conv_out, conv_x, conv_k, conv_b),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seq-len", type=int, default=2048)
    parser.add_argument("--d-head", type=int, default=64)
    parser.add_argument("--runs", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    rng = make_rng(args.seed)
    results = {"seq_len": args.seq_len, "d_head": args.d_head, "kernels": {}, "attention": {}}

    with threadpool_limits(limits=1):
        for name, make in kernel_cases(args.seq_len, args.d_head, rng).items():
            results["kernels"][name] = {b: timeit(make(kernels.backend_module(b)), args.runs) for b in backends}

        q, k, v = (rng.standard_normal((args.seq_len, args.d_head)) for _ in range(3))
        params = SparsityParams(1.0, 0.5)
        for b in backends:
            with kernels.use_backend(b):
                sel_rng = make_rng(args.seed + 1)
                results["attention"].setdefault("dense", {})[b] = timeit(lambda: attention_dense(q, k, v), args.runs)
                results["attention"].setdefault("prob-sparse r=0.5", {})[b] = timeit(
                    lambda: attention_prob_sparse(q, k, v, select_queries(q, k, params, sel_rng)), args.runs
                )

    width = max(len(n) for n in list(results["kernels"]) + list(results["attention"]))
    print(f"L={args.seq_len}, d_head={args.d_head}, median of {args.runs} runs, single thread")
    print(f"{'':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + "  numpy/numba")
    for section in ("kernels", "attention"):
        for name, t in results[section].items():
            cells = "  ".join(f"{t[b] * 1e3:>8.2f}ms" for b in backends)
            ratio = f"{t['numpy'] / t['numba']:>10.2f}x" if "numba" in t else ""
            print(f"{name:<{width}}  {cells}  {ratio}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
